//! Feed-forward backbone: hidden blocks of dense + batch norm + ReLU +
//! dropout, followed by a dense output layer.
//!
//! The penultimate features are the activations feeding the output layer.
//! Inference is pure and deterministic; the training path owns all mutation
//! (dropout draws, batch-norm running statistics, power iteration).

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layer::{BatchNormCache, BatchNormState, DenseLayer, SpectralGeometry};
use crate::seeding::Rng;

/// ReLU that propagates NaN so corrupted inputs surface in the loss check
/// instead of being silently zeroed.
#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 || v.is_nan() {
        v
    } else {
        0.0
    }
}

/// Shape and regularization choices for a backbone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchDescriptor {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub dropout: f64,
    pub spectral_norm: bool,
    pub batch_norm: bool,
}

impl ArchDescriptor {
    /// Spectral-normalized encoder: hidden widths 256 then a 128-wide
    /// penultimate layer, batch norm, dropout 0.05.
    pub fn gauss_encoder(input_dim: usize, n_classes: usize) -> Self {
        Self {
            input_dim,
            hidden: vec![256, 128],
            output_dim: n_classes,
            dropout: 0.05,
            spectral_norm: true,
            batch_norm: true,
        }
    }

    /// Geometry-preserving twin: same shape, no spectral norm, dropout 0.1.
    pub fn plain_net(input_dim: usize, n_classes: usize) -> Self {
        Self {
            dropout: 0.1,
            spectral_norm: false,
            ..Self::gauss_encoder(input_dim, n_classes)
        }
    }

    /// Shared baseline classifier: two hidden layers of 128, dropout 0.2.
    pub fn baseline(input_dim: usize, n_classes: usize) -> Self {
        Self {
            input_dim,
            hidden: vec![128, 128],
            output_dim: n_classes,
            dropout: 0.2,
            spectral_norm: false,
            batch_norm: false,
        }
    }

    /// Binary in-vs-noise classifier with 128 and 64 hidden units.
    pub fn binary_ood_classifier(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: vec![128, 64],
            output_dim: 2,
            dropout: 0.0,
            spectral_norm: false,
            batch_norm: false,
        }
    }

    /// Per-variable regressor with hidden sizes 64 and 32.
    pub fn regressor(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: vec![64, 32],
            output_dim: 1,
            dropout: 0.0,
            spectral_norm: false,
            batch_norm: false,
        }
    }

    pub fn penultimate_dim(&self) -> usize {
        *self.hidden.last().expect("at least one hidden layer")
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout = rate;
        self
    }
}

/// Forward pass mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Training,
    Inference,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HiddenBlock {
    pub dense: DenseLayer,
    pub batch_norm: Option<BatchNormState>,
}

/// A trained (or in-training) backbone.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Backbone {
    pub arch: ArchDescriptor,
    pub blocks: Vec<HiddenBlock>,
    pub output: DenseLayer,
    /// Mode the backbone was left in; scoring entry points are explicit about
    /// the mode they use, so this is informational after training.
    pub mode: Mode,
}

/// Logits plus penultimate features for a batch.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Array2<f64>,
    pub penultimate: Array2<f64>,
}

#[derive(Debug)]
pub struct BlockCache {
    input: Array2<f64>,
    effective_weight: Array2<f64>,
    spectral: Option<SpectralGeometry>,
    batch_norm: Option<BatchNormCache>,
    /// Post-ReLU activations (pre-dropout); the sign mask drives backward.
    relu_out: Array2<f64>,
    /// Inverted-dropout mask (entries 0 or 1/(1-p)), when dropout is active.
    dropout: Option<Array2<f64>>,
}

/// Activations and masks captured by a training-mode forward pass, consumed
/// by [`Backbone::backward`].
#[derive(Debug)]
pub struct TrainCache {
    blocks: Vec<BlockCache>,
    penultimate: Array2<f64>,
    output_weight: Array2<f64>,
    output_spectral: Option<SpectralGeometry>,
}

/// Per-layer parameter gradients, in backbone order.
#[derive(Debug, Clone)]
pub struct LayerGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub blocks: Vec<LayerGrad>,
    pub output: LayerGrad,
}

fn affine(x: &Array2<f64>, weight: &Array2<f64>, bias: &Array1<f64>) -> Array2<f64> {
    let mut z = x.dot(&weight.t());
    for mut row in z.rows_mut() {
        row += bias;
    }
    z
}

impl Backbone {
    /// Seeded initialization; layer parameters are drawn in order, followed by
    /// each spectral direction.
    pub fn init(arch: &ArchDescriptor, rng: &mut Rng) -> Self {
        assert!(!arch.hidden.is_empty(), "backbone needs a hidden layer");
        let mut blocks = Vec::with_capacity(arch.hidden.len());
        let mut in_dim = arch.input_dim;
        for &width in &arch.hidden {
            let dense = DenseLayer::init(in_dim, width, arch.spectral_norm, rng);
            let batch_norm = arch.batch_norm.then(|| BatchNormState::new(width));
            blocks.push(HiddenBlock { dense, batch_norm });
            in_dim = width;
        }
        let output = DenseLayer::init(in_dim, arch.output_dim, arch.spectral_norm, rng);
        Self {
            arch: arch.clone(),
            blocks,
            output,
            mode: Mode::Training,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn n_classes(&self) -> usize {
        self.arch.output_dim
    }

    pub fn penultimate_dim(&self) -> usize {
        self.arch.penultimate_dim()
    }

    fn check_width(&self, actual: usize) -> Result<()> {
        if actual != self.arch.input_dim {
            return Err(Error::DimMismatch {
                context: "backbone input".to_string(),
                expected: self.arch.input_dim,
                actual,
            });
        }
        Ok(())
    }

    /// Deterministic inference pass: running statistics, dropout disabled,
    /// spectral estimates frozen.
    pub fn forward(&self, x: &ArrayView2<f64>) -> Result<ForwardOutput> {
        self.check_width(x.ncols())?;
        let mut h = x.to_owned();
        for block in &self.blocks {
            let (weight, _) = block.dense.effective_weight();
            let mut z = affine(&h, &weight, &block.dense.bias);
            if let Some(bn) = &block.batch_norm {
                z = bn.forward_infer(&z);
            }
            z.mapv_inplace(relu);
            h = z;
        }
        let (out_w, _) = self.output.effective_weight();
        let logits = affine(&h, &out_w, &self.output.bias);
        Ok(ForwardOutput {
            logits,
            penultimate: h,
        })
    }

    /// Monte Carlo pass: dropout masks drawn from `rng`, batch norm in
    /// inference mode. Does not mutate the model.
    pub fn forward_mc(&self, x: &ArrayView2<f64>, rng: &mut Rng) -> Result<ForwardOutput> {
        self.check_width(x.ncols())?;
        let p = self.arch.dropout;
        let mut h = x.to_owned();
        for block in &self.blocks {
            let (weight, _) = block.dense.effective_weight();
            let mut z = affine(&h, &weight, &block.dense.bias);
            if let Some(bn) = &block.batch_norm {
                z = bn.forward_infer(&z);
            }
            z.mapv_inplace(relu);
            if p > 0.0 {
                let keep = 1.0 - p;
                z.mapv_inplace(|v| {
                    if rng.random::<f64>() < p {
                        0.0
                    } else {
                        v / keep
                    }
                });
            }
            h = z;
        }
        let (out_w, _) = self.output.effective_weight();
        let logits = affine(&h, &out_w, &self.output.bias);
        Ok(ForwardOutput {
            logits,
            penultimate: h,
        })
    }

    /// Training pass: batch statistics (running stats updated), dropout from
    /// `rng`, caches retained for backward. Spectral directions are *not*
    /// stepped here; the training loop steps them once per update.
    pub fn forward_train(
        &mut self,
        x: &ArrayView2<f64>,
        rng: &mut Rng,
    ) -> Result<(ForwardOutput, TrainCache)> {
        self.check_width(x.ncols())?;
        let p = self.arch.dropout;
        let mut h = x.to_owned();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &mut self.blocks {
            let input = h;
            let (weight, spectral) = block.dense.effective_weight();
            let mut z = affine(&input, &weight, &block.dense.bias);
            let bn_cache = match &mut block.batch_norm {
                Some(bn) => {
                    let (normed, cache) = bn.forward_train(&z);
                    z = normed;
                    Some(cache)
                }
                None => None,
            };
            z.mapv_inplace(relu);
            let relu_out = z.clone();
            let dropout = if p > 0.0 {
                let keep = 1.0 - p;
                let mask = Array2::from_shape_fn(z.dim(), |_| {
                    if rng.random::<f64>() < p {
                        0.0
                    } else {
                        1.0 / keep
                    }
                });
                z.zip_mut_with(&mask, |v, &m| *v *= m);
                Some(mask)
            } else {
                None
            };
            caches.push(BlockCache {
                input,
                effective_weight: weight,
                spectral,
                batch_norm: bn_cache,
                relu_out,
                dropout,
            });
            h = z;
        }
        let (out_w, out_geom) = self.output.effective_weight();
        let logits = affine(&h, &out_w, &self.output.bias);
        let cache = TrainCache {
            blocks: caches,
            penultimate: h.clone(),
            output_weight: out_w,
            output_spectral: out_geom,
        };
        Ok((
            ForwardOutput {
                logits,
                penultimate: h,
            },
            cache,
        ))
    }

    /// One power-iteration step on every spectral-normalized layer.
    pub fn power_iteration_step(&mut self) {
        for block in &mut self.blocks {
            block.dense.power_iteration_step();
        }
        self.output.power_iteration_step();
    }

    /// Backward pass from logit gradients (plus an optional gradient flowing
    /// directly into the penultimate features, e.g. from a feature-space
    /// regularizer).
    pub fn backward(
        &self,
        cache: &TrainCache,
        grad_logits: &Array2<f64>,
        grad_penultimate_extra: Option<&Array2<f64>>,
    ) -> Gradients {
        let grad_out_w_eff = grad_logits.t().dot(&cache.penultimate);
        let grad_out_bias = grad_logits.t().dot(&Array1::ones(grad_logits.nrows()));
        let grad_out_w = match &cache.output_spectral {
            Some(geom) => self
                .output
                .spectral_grad(grad_out_w_eff, geom, &cache.output_weight),
            None => grad_out_w_eff,
        };

        let mut grad_h = grad_logits.dot(&cache.output_weight);
        if let Some(extra) = grad_penultimate_extra {
            grad_h += extra;
        }

        let mut block_grads = vec![
            LayerGrad {
                weight: Array2::zeros((0, 0)),
                bias: Array1::zeros(0),
            };
            self.blocks.len()
        ];
        for (idx, block) in self.blocks.iter().enumerate().rev() {
            let bc = &cache.blocks[idx];
            if let Some(mask) = &bc.dropout {
                grad_h.zip_mut_with(mask, |g, &m| *g *= m);
            }
            grad_h.zip_mut_with(&bc.relu_out, |g, &a| {
                if a <= 0.0 {
                    *g = 0.0;
                }
            });
            if let (Some(bn), Some(bn_cache)) = (&block.batch_norm, &bc.batch_norm) {
                grad_h = bn.backward(bn_cache, &grad_h);
            }
            let grad_w_eff = grad_h.t().dot(&bc.input);
            let grad_bias = grad_h.t().dot(&Array1::ones(grad_h.nrows()));
            let grad_w = match &bc.spectral {
                Some(geom) => block
                    .dense
                    .spectral_grad(grad_w_eff, geom, &bc.effective_weight),
                None => grad_w_eff,
            };
            block_grads[idx] = LayerGrad {
                weight: grad_w,
                bias: grad_bias,
            };
            grad_h = grad_h.dot(&bc.effective_weight);
        }

        Gradients {
            blocks: block_grads,
            output: LayerGrad {
                weight: grad_out_w,
                bias: grad_out_bias,
            },
        }
    }

    /// Gradient of `log max_c softmax(logits(x) / temperature)_c` with respect
    /// to the input, evaluated in inference mode.
    pub fn input_gradient(&self, x: &ArrayView1<f64>, temperature: f64) -> Result<Array1<f64>> {
        self.check_width(x.len())?;
        let batch = x.to_owned().insert_axis(ndarray::Axis(0));

        // Inference forward, keeping what backward needs.
        let mut h = batch;
        let mut effective_weights = Vec::with_capacity(self.blocks.len());
        let mut bn_scales = Vec::with_capacity(self.blocks.len());
        let mut relu_masks = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (weight, _) = block.dense.effective_weight();
            let mut z = affine(&h, &weight, &block.dense.bias);
            let scale = block.batch_norm.as_ref().map(|bn| {
                z = bn.forward_infer(&z);
                bn.inference_scale()
            });
            z.mapv_inplace(relu);
            relu_masks.push(z.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }));
            effective_weights.push(weight);
            bn_scales.push(scale);
            h = z;
        }
        let (out_w, _) = self.output.effective_weight();
        let logits = affine(&h, &out_w, &self.output.bias);

        // d/dz of log softmax(z/T)_{argmax} = (onehot - softmax(z/T)) / T.
        let row = logits.row(0);
        let best = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
            .map(|(i, _)| i)
            .expect("nonempty logits");
        let scaled: Vec<f64> = row.iter().map(|v| v / temperature).collect();
        let max_scaled = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = scaled.iter().map(|v| (v - max_scaled).exp()).collect();
        let denom: f64 = exp.iter().sum();
        let mut grad_logits = Array2::<f64>::zeros((1, row.len()));
        for c in 0..row.len() {
            let p = exp[c] / denom;
            let indicator = if c == best { 1.0 } else { 0.0 };
            grad_logits[[0, c]] = (indicator - p) / temperature;
        }

        let mut grad = grad_logits.dot(&out_w);
        for idx in (0..self.blocks.len()).rev() {
            grad.zip_mut_with(&relu_masks[idx], |g, &m| *g *= m);
            if let Some(scale) = &bn_scales[idx] {
                for mut row in grad.rows_mut() {
                    for j in 0..row.len() {
                        row[j] *= scale[j];
                    }
                }
            }
            grad = grad.dot(&effective_weights[idx]);
        }
        Ok(grad.row(0).to_owned())
    }
}
