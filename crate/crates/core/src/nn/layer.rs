//! Dense layers with optional spectral normalization, and batch
//! normalization state.
//!
//! Spectral normalization keeps a persistent power-iteration direction per
//! layer. One iteration step runs per training update; at inference the
//! stored direction is frozen and the scale estimate is recomputed
//! deterministically from it.

use ndarray::{Array1, Array2};
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::seeding::Rng;

/// Guard against division by a vanishing singular-value estimate.
pub const SPECTRAL_EPSILON: f64 = 1e-12;

/// Dense affine layer. Weights are `out_dim x in_dim`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    /// Power-iteration direction (unit norm, `out_dim`) when spectral
    /// normalization is enabled for this layer.
    pub spectral_state: Option<Array1<f64>>,
}

/// Geometry of one spectral-normalization evaluation: the direction pair and
/// the singular-value estimate they induce.
#[derive(Debug, Clone)]
pub struct SpectralGeometry {
    pub u: Array1<f64>,
    pub v: Array1<f64>,
    pub sigma: f64,
}

impl DenseLayer {
    /// Fan-in-scaled uniform initialization, deterministic per RNG stream.
    pub fn init(in_dim: usize, out_dim: usize, spectral_norm: bool, rng: &mut Rng) -> Self {
        let limit = 1.0 / (in_dim as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("valid range");
        let weight = Array2::from_shape_fn((out_dim, in_dim), |_| dist.sample(rng));
        let bias = Array1::from_shape_fn(out_dim, |_| dist.sample(rng));
        let spectral_state = spectral_norm.then(|| {
            let mut u = Array1::from_shape_fn(out_dim, |_| {
                <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
            });
            let norm = u.dot(&u).sqrt().max(SPECTRAL_EPSILON);
            u.mapv_inplace(|x| x / norm);
            u
        });
        Self {
            weight,
            bias,
            spectral_state,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn has_spectral_norm(&self) -> bool {
        self.spectral_state.is_some()
    }

    /// Singular-value estimate induced by the stored direction `u`:
    /// `v = W^T u / ||W^T u||`, `sigma = ||W^T u||`. Does not update state.
    pub fn spectral_geometry(&self) -> Option<SpectralGeometry> {
        let u = self.spectral_state.as_ref()?;
        let g = self.weight.t().dot(u);
        let sigma = g.dot(&g).sqrt();
        let v = if sigma > SPECTRAL_EPSILON {
            &g / sigma
        } else {
            g
        };
        Some(SpectralGeometry {
            u: u.clone(),
            v,
            sigma,
        })
    }

    /// One power-iteration step on the stored direction: `u <- W v / ||W v||`.
    pub fn power_iteration_step(&mut self) {
        let Some(geom) = self.spectral_geometry() else {
            return;
        };
        let mut u = self.weight.dot(&geom.v);
        let norm = u.dot(&u).sqrt();
        if norm > SPECTRAL_EPSILON {
            u.mapv_inplace(|x| x / norm);
            self.spectral_state = Some(u);
        }
    }

    /// Effective weight for the forward pass: `W / max(sigma, eps)` under
    /// spectral normalization, the raw weight otherwise.
    pub fn effective_weight(&self) -> (Array2<f64>, Option<SpectralGeometry>) {
        match self.spectral_geometry() {
            Some(geom) => {
                let scale = 1.0 / geom.sigma.max(SPECTRAL_EPSILON);
                (&self.weight * scale, Some(geom))
            }
            None => (self.weight.clone(), None),
        }
    }

    /// Maps the gradient w.r.t. the effective weight back to the raw weight.
    ///
    /// With `Wbar = W / sigma` and `sigma = u^T W v` (directions held fixed
    /// within a step), `dW = (G - <G, Wbar> u v^T) / sigma`.
    pub fn spectral_grad(
        &self,
        grad_effective: Array2<f64>,
        geom: &SpectralGeometry,
        effective: &Array2<f64>,
    ) -> Array2<f64> {
        if geom.sigma <= SPECTRAL_EPSILON {
            return grad_effective / SPECTRAL_EPSILON;
        }
        let inner: f64 = grad_effective
            .iter()
            .zip(effective.iter())
            .map(|(g, w)| g * w)
            .sum();
        let mut grad = grad_effective;
        for i in 0..grad.nrows() {
            for j in 0..grad.ncols() {
                grad[[i, j]] = (grad[[i, j]] - inner * geom.u[i] * geom.v[j]) / geom.sigma;
            }
        }
        grad
    }
}

/// Batch-normalization running state. Normalization only; no learned affine
/// parameters. Batch statistics use the population variance (divide by n).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchNormState {
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

/// Per-batch quantities needed for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub normalized: Array2<f64>,
    pub inv_std: Array1<f64>,
}

impl BatchNormState {
    pub fn new(dim: usize) -> Self {
        Self {
            running_mean: Array1::zeros(dim),
            running_var: Array1::ones(dim),
            momentum: 0.1,
            epsilon: 1e-5,
        }
    }

    /// Training-mode pass: normalizes by batch statistics and folds them into
    /// the running estimates.
    pub fn forward_train(&mut self, x: &Array2<f64>) -> (Array2<f64>, BatchNormCache) {
        let n = x.nrows() as f64;
        let dim = x.ncols();
        let mut mean = Array1::<f64>::zeros(dim);
        let mut var = Array1::<f64>::zeros(dim);
        for row in x.rows() {
            mean += &row;
        }
        mean.mapv_inplace(|m| m / n);
        for row in x.rows() {
            for j in 0..dim {
                let c = row[j] - mean[j];
                var[j] += c * c;
            }
        }
        var.mapv_inplace(|v| v / n);

        let inv_std = var.mapv(|v| 1.0 / (v + self.epsilon).sqrt());
        let mut normalized = x.clone();
        for mut row in normalized.rows_mut() {
            for j in 0..dim {
                row[j] = (row[j] - mean[j]) * inv_std[j];
            }
        }

        let m = self.momentum;
        self.running_mean.zip_mut_with(&mean, |r, &b| *r = (1.0 - m) * *r + m * b);
        self.running_var.zip_mut_with(&var, |r, &b| *r = (1.0 - m) * *r + m * b);

        let cache = BatchNormCache {
            normalized: normalized.clone(),
            inv_std,
        };
        (normalized, cache)
    }

    /// Inference-mode pass using running statistics. Pure.
    pub fn forward_infer(&self, x: &Array2<f64>) -> Array2<f64> {
        let dim = x.ncols();
        let inv_std: Array1<f64> = self
            .running_var
            .mapv(|v| 1.0 / (v + self.epsilon).sqrt());
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for j in 0..dim {
                row[j] = (row[j] - self.running_mean[j]) * inv_std[j];
            }
        }
        out
    }

    /// Per-feature affine scale applied at inference (for input gradients).
    pub fn inference_scale(&self) -> Array1<f64> {
        self.running_var.mapv(|v| 1.0 / (v + self.epsilon).sqrt())
    }

    /// Backward through the training-mode normalization.
    pub fn backward(&self, cache: &BatchNormCache, grad_out: &Array2<f64>) -> Array2<f64> {
        let n = grad_out.nrows() as f64;
        let dim = grad_out.ncols();
        let mut mean_g = Array1::<f64>::zeros(dim);
        let mut mean_gx = Array1::<f64>::zeros(dim);
        for (g_row, x_row) in grad_out.rows().into_iter().zip(cache.normalized.rows()) {
            for j in 0..dim {
                mean_g[j] += g_row[j];
                mean_gx[j] += g_row[j] * x_row[j];
            }
        }
        mean_g.mapv_inplace(|v| v / n);
        mean_gx.mapv_inplace(|v| v / n);

        let mut grad_in = grad_out.clone();
        for (mut g_row, x_row) in grad_in.rows_mut().into_iter().zip(cache.normalized.rows()) {
            for j in 0..dim {
                g_row[j] = cache.inv_std[j] * (g_row[j] - mean_g[j] - x_row[j] * mean_gx[j]);
            }
        }
        grad_in
    }
}
