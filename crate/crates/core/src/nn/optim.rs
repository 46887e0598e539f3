//! AdamW with a cosine-annealed learning rate.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::net::{Backbone, Gradients};

/// Training hyperparameters shared by every model in the toolkit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    /// Cosine annealing floor; the rate decays from `learning_rate` to this
    /// value over `max_epochs` with no restarts.
    pub eta_min: f64,
    pub seed: u64,
}

impl OptimizerConfig {
    /// Dual-backbone encoder protocol: AdamW 1e-3 / weight decay 1e-4, up to
    /// 50 epochs, patience 8.
    pub fn backbone(seed: u64) -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            max_epochs: 50,
            patience: 8,
            batch_size: 128,
            eta_min: 1e-6,
            seed,
        }
    }

    /// Shared baseline protocol: Adam 1e-3, 30 epochs, patience 5.
    pub fn baseline(seed: u64) -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 0.0,
            max_epochs: 30,
            patience: 5,
            batch_size: 128,
            eta_min: 1e-6,
            seed,
        }
    }

    /// In-vs-noise classifier: 20 epochs, no effective early stopping.
    pub fn binary_ood(seed: u64) -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 0.0,
            max_epochs: 20,
            patience: 19,
            batch_size: 128,
            eta_min: 1e-6,
            seed,
        }
    }

    /// Per-variable regressors: up to 300 epochs with early stopping.
    pub fn regressor(seed: u64) -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 0.0,
            max_epochs: 300,
            patience: 10,
            batch_size: 128,
            eta_min: 1e-6,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patience >= self.max_epochs {
            return Err(Error::invalid(format!(
                "patience ({}) must be < max_epochs ({})",
                self.patience, self.max_epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        Ok(())
    }

    /// Learning rate at a given epoch under cosine annealing.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let span = (self.max_epochs.saturating_sub(1)).max(1) as f64;
        let t = (epoch as f64 / span).min(1.0);
        self.eta_min
            + 0.5 * (self.learning_rate - self.eta_min) * (1.0 + (std::f64::consts::PI * t).cos())
    }
}

struct TensorState {
    m_weight: Array2<f64>,
    v_weight: Array2<f64>,
    m_bias: Array1<f64>,
    v_bias: Array1<f64>,
}

/// AdamW state aligned with the backbone's layer order. Decoupled weight
/// decay applies to weight matrices only, never biases.
pub struct AdamW {
    states: Vec<TensorState>,
    step: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl AdamW {
    pub fn new(model: &Backbone) -> Self {
        let mut states: Vec<TensorState> = model
            .blocks
            .iter()
            .map(|b| TensorState {
                m_weight: Array2::zeros(b.dense.weight.dim()),
                v_weight: Array2::zeros(b.dense.weight.dim()),
                m_bias: Array1::zeros(b.dense.bias.len()),
                v_bias: Array1::zeros(b.dense.bias.len()),
            })
            .collect();
        states.push(TensorState {
            m_weight: Array2::zeros(model.output.weight.dim()),
            v_weight: Array2::zeros(model.output.weight.dim()),
            m_bias: Array1::zeros(model.output.bias.len()),
            v_bias: Array1::zeros(model.output.bias.len()),
        });
        Self {
            states,
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step(&mut self, model: &mut Backbone, grads: &Gradients, lr: f64, weight_decay: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (beta1, beta2, eps) = (self.beta1, self.beta2, self.epsilon);

        let update_weight =
            |w: &mut Array2<f64>, g: &Array2<f64>, m: &mut Array2<f64>, v: &mut Array2<f64>| {
                m.zip_mut_with(g, |m, &g| *m = beta1 * *m + (1.0 - beta1) * g);
                v.zip_mut_with(g, |v, &g| *v = beta2 * *v + (1.0 - beta2) * g * g);
                for ((w, &m), &v) in w.iter_mut().zip(m.iter()).zip(v.iter()) {
                    let m_hat = m / bc1;
                    let v_hat = v / bc2;
                    *w -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * *w);
                }
            };
        for (block, (grad, state)) in model
            .blocks
            .iter_mut()
            .zip(grads.blocks.iter().zip(self.states.iter_mut()))
        {
            update_weight(
                &mut block.dense.weight,
                &grad.weight,
                &mut state.m_weight,
                &mut state.v_weight,
            );
            adam_bias(
                &mut block.dense.bias,
                &grad.bias,
                &mut state.m_bias,
                &mut state.v_bias,
                beta1,
                beta2,
                bc1,
                bc2,
                lr,
                eps,
            );
        }
        let last = self.states.last_mut().expect("output state");
        update_weight(
            &mut model.output.weight,
            &grads.output.weight,
            &mut last.m_weight,
            &mut last.v_weight,
        );
        adam_bias(
            &mut model.output.bias,
            &grads.output.bias,
            &mut last.m_bias,
            &mut last.v_bias,
            beta1,
            beta2,
            bc1,
            bc2,
            lr,
            eps,
        );
    }
}

#[allow(clippy::too_many_arguments)]
fn adam_bias(
    b: &mut Array1<f64>,
    g: &Array1<f64>,
    m: &mut Array1<f64>,
    v: &mut Array1<f64>,
    beta1: f64,
    beta2: f64,
    bc1: f64,
    bc2: f64,
    lr: f64,
    eps: f64,
) {
    m.zip_mut_with(g, |m, &g| *m = beta1 * *m + (1.0 - beta1) * g);
    v.zip_mut_with(g, |v, &g| *v = beta2 * *v + (1.0 - beta2) * g * g);
    for ((b, &m), &v) in b.iter_mut().zip(m.iter()).zip(v.iter()) {
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        *b -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cosine_schedule_hits_both_endpoints() {
        let cfg = OptimizerConfig {
            learning_rate: 1e-3,
            weight_decay: 0.0,
            max_epochs: 50,
            patience: 5,
            batch_size: 32,
            eta_min: 1e-6,
            seed: 0,
        };
        assert_abs_diff_eq!(cfg.learning_rate_at(0), 1e-3, epsilon = 1e-15);
        assert_abs_diff_eq!(cfg.learning_rate_at(49), 1e-6, epsilon = 1e-12);
        assert!(cfg.learning_rate_at(25) < 1e-3);
        assert!(cfg.learning_rate_at(25) > 1e-6);
    }

    #[test]
    fn patience_must_be_smaller_than_epochs() {
        let mut cfg = OptimizerConfig::baseline(0);
        cfg.patience = cfg.max_epochs;
        assert!(cfg.validate().is_err());
    }
}
