//! Synthetic outlier set used only for signal direction correction and
//! ranking: half extrapolating mixtures of training pairs, half draws from a
//! covariance-scaled Gaussian.

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_ridge, gaussian_rows, sample_covariance};
use crate::seeding::rng_from_seed;

/// Hard cap on the pseudo-OOD row count.
pub const MAX_PSEUDO_OOD: usize = 2000;

/// Provenance of one mixture row: the two source indices and the
/// extrapolation coefficient (always > 1).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MixRecord {
    pub a: usize,
    pub b: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PseudoOodManifest {
    pub n_mixes: usize,
    pub n_noise: usize,
    pub seed: u64,
    pub mixes: Vec<MixRecord>,
    /// Ridge needed to factor the scaled covariance, 0 when none.
    pub covariance_ridge: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PseudoOodSet {
    pub features: Array2<f64>,
    pub manifest: PseudoOodManifest,
}

/// Generates up to `n_total` pseudo-OOD rows (capped at 2000): the first
/// half extrapolating mixtures `alpha * x_a + (1 - alpha) * x_b` with
/// `alpha ~ U[1.2, 3.0]` over distinct training pairs, the second half draws
/// from `N(0, 4 * Sigma)` with `Sigma` the empirical train covariance.
pub fn gen_pseudo_ood(
    train: &ArrayView2<f64>,
    n_total: usize,
    seed: u64,
) -> Result<PseudoOodSet> {
    let n_train = train.nrows();
    if n_train < 2 {
        return Err(Error::invalid("pseudo-OOD needs at least 2 training rows"));
    }
    let n_total = n_total.min(MAX_PSEUDO_OOD);
    let n_mixes = n_total / 2;
    let n_noise = n_total - n_mixes;
    let d = train.ncols();

    let mut rng = rng_from_seed(seed);
    let mut features = Array2::<f64>::zeros((n_total, d));
    let mut mixes = Vec::with_capacity(n_mixes);
    for i in 0..n_mixes {
        let a = rng.random_range(0..n_train);
        let b = loop {
            let candidate = rng.random_range(0..n_train);
            if candidate != a {
                break candidate;
            }
        };
        let alpha = 1.2 + rng.random::<f64>() * 1.8;
        let row_a = train.row(a);
        let row_b = train.row(b);
        for j in 0..d {
            features[[i, j]] = alpha * row_a[j] + (1.0 - alpha) * row_b[j];
        }
        mixes.push(MixRecord { a, b, alpha });
    }

    let cov = sample_covariance(train);
    let scaled = &cov * 4.0;
    let (chol, ridge) = cholesky_with_ridge(&scaled)?;
    let noise = gaussian_rows(&chol, n_noise, &mut rng);
    features
        .slice_mut(ndarray::s![n_mixes.., ..])
        .assign(&noise);

    Ok(PseudoOodSet {
        features,
        manifest: PseudoOodManifest {
            n_mixes,
            n_noise,
            seed,
            mixes,
            covariance_ridge: ridge,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand_distr::{Distribution, StandardNormal};

    fn train_matrix(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = rng_from_seed(seed);
        Array2::from_shape_fn((n, d), |_| {
            <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        })
    }

    #[test]
    fn default_composition_is_half_mixes_half_noise() {
        let train = train_matrix(100, 4, 1);
        let set = gen_pseudo_ood(&train.view(), 2000, 2).unwrap();
        assert_eq!(set.manifest.n_mixes, 1000);
        assert_eq!(set.manifest.n_noise, 1000);
        assert_eq!(set.features.nrows(), 2000);
        assert_eq!(set.manifest.mixes.len(), 1000);
    }

    #[test]
    fn requests_above_the_cap_are_clamped() {
        let train = train_matrix(50, 3, 3);
        let set = gen_pseudo_ood(&train.view(), 10_000, 4).unwrap();
        assert_eq!(set.features.nrows(), MAX_PSEUDO_OOD);
    }

    #[test]
    fn mix_rows_extrapolate_outside_the_segment() {
        // alpha > 1 puts each mix outside [x_a, x_b]; verify coordinate-wise
        // with the recorded (a, b, alpha).
        let train = train_matrix(60, 3, 5);
        let set = gen_pseudo_ood(&train.view(), 400, 6).unwrap();
        for (i, mix) in set.manifest.mixes.iter().enumerate() {
            assert!(mix.alpha > 1.0 && mix.alpha <= 3.0);
            assert_ne!(mix.a, mix.b);
            let xa = train.row(mix.a);
            let xb = train.row(mix.b);
            for j in 0..3 {
                let v = set.features[[i, j]];
                let lo = xa[j].min(xb[j]);
                let hi = xa[j].max(xb[j]);
                // Outside the segment whenever the endpoints differ.
                if (xa[j] - xb[j]).abs() > 1e-12 {
                    assert!(
                        v < lo - 1e-12 || v > hi + 1e-12,
                        "row {i} col {j}: {v} inside [{lo}, {hi}]"
                    );
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let train = train_matrix(80, 2, 7);
        let a = gen_pseudo_ood(&train.view(), 500, 8).unwrap();
        let b = gen_pseudo_ood(&train.view(), 500, 8).unwrap();
        assert_eq!(a.features, b.features);
    }
}
