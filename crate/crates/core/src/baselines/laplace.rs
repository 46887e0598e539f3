//! Last-layer posterior approximation: a dropout-free classifier provides
//! penultimate features, and an L2-regularized multinomial logistic model
//! fitted on them (by damped Newton, to gradient norm below 1e-6) supplies
//! the predictive probabilities.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::nn::{train_classifier, ArchDescriptor, Backbone, OptimizerConfig};

/// Multinomial logistic regression weights, one row per class over
/// `[features, 1]` (the trailing column is the intercept, which is not
/// penalized).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Array2<f64>,
    pub l2_strength: f64,
    pub final_gradient_norm: f64,
}

fn design_matrix(features: &ArrayView2<f64>) -> Array2<f64> {
    let (n, d) = (features.nrows(), features.ncols());
    let mut x = Array2::<f64>::ones((n, d + 1));
    x.slice_mut(ndarray::s![.., ..d]).assign(features);
    x
}

fn logistic_probs(x: &Array2<f64>, weights: &Array2<f64>) -> Array2<f64> {
    let logits = x.dot(&weights.t());
    crate::nn::loss::softmax_rows(&logits.view())
}

/// Objective: sum of cross-entropies plus `0.5 * l2 * ||W||^2` over the
/// non-intercept weights.
fn objective(x: &Array2<f64>, labels: &[usize], weights: &Array2<f64>, l2: f64) -> f64 {
    let probs = logistic_probs(x, weights);
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        loss -= probs[[i, y]].max(1e-300).ln();
    }
    let d = weights.ncols() - 1;
    let penalty: f64 = weights
        .slice(ndarray::s![.., ..d])
        .iter()
        .map(|w| w * w)
        .sum();
    loss + 0.5 * l2 * penalty
}

fn gradient(x: &Array2<f64>, labels: &[usize], weights: &Array2<f64>, l2: f64) -> Array2<f64> {
    let probs = logistic_probs(x, weights);
    let mut residual = probs;
    for (i, &y) in labels.iter().enumerate() {
        residual[[i, y]] -= 1.0;
    }
    let mut grad = residual.t().dot(x);
    let d = weights.ncols() - 1;
    let mut penalized = grad.slice_mut(ndarray::s![.., ..d]);
    penalized.zip_mut_with(&weights.slice(ndarray::s![.., ..d]), |g, &w| {
        *g += l2 * w;
    });
    grad
}

/// Fits by damped Newton. The Hessian is assembled exactly:
/// `H[(c,i),(c',j)] = sum_n p_nc (delta_cc' - p_nc') x_ni x_nj` plus the L2
/// block diagonal (and a small jitter on the intercept diagonal).
pub fn fit_logistic(
    features: &ArrayView2<f64>,
    labels: &[usize],
    l2_strength: f64,
) -> Result<LogisticModel> {
    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    if n_classes < 2 {
        return Err(Error::invalid("logistic regression needs 2+ classes"));
    }
    let x = design_matrix(features);
    let d1 = x.ncols();
    let p = n_classes * d1;
    let mut weights = Array2::<f64>::zeros((n_classes, d1));

    let mut grad_norm = f64::INFINITY;
    for _iter in 0..100 {
        let grad = gradient(&x, labels, &weights, l2_strength);
        grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm < 1e-6 {
            break;
        }

        let probs = logistic_probs(&x, &weights);
        let mut hessian = Array2::<f64>::zeros((p, p));
        for c in 0..n_classes {
            for cp in 0..=c {
                // Weighted Gram block with w_n = p_nc (delta - p_ncp).
                let mut block = Array2::<f64>::zeros((d1, d1));
                for (row, probs_row) in x.rows().into_iter().zip(probs.rows()) {
                    let w = probs_row[c] * (f64::from(u8::from(c == cp)) - probs_row[cp]);
                    for i in 0..d1 {
                        let wi = w * row[i];
                        for j in 0..=i {
                            block[[i, j]] += wi * row[j];
                        }
                    }
                }
                for i in 0..d1 {
                    for j in 0..=i {
                        let v = block[[i, j]];
                        hessian[[c * d1 + i, cp * d1 + j]] = v;
                        hessian[[cp * d1 + j, c * d1 + i]] = v;
                        if i != j {
                            hessian[[c * d1 + j, cp * d1 + i]] = v;
                            hessian[[cp * d1 + i, c * d1 + j]] = v;
                        }
                    }
                }
            }
        }
        for c in 0..n_classes {
            for i in 0..d1 {
                let idx = c * d1 + i;
                hessian[[idx, idx]] += if i + 1 == d1 { 1e-8 } else { l2_strength };
            }
        }

        let flat_grad = Array1::from_iter(grad.iter().copied());
        let mut jitter = 0.0;
        let step = loop {
            let mut h = hessian.clone();
            if jitter > 0.0 {
                for i in 0..p {
                    h[[i, i]] += jitter;
                }
            }
            match Cholesky::new(&h.view()) {
                Some(chol) => break chol.solve(&flat_grad.view()),
                None => {
                    jitter = if jitter == 0.0 { 1e-8 } else { jitter * 10.0 };
                    if jitter > 1e2 {
                        return Err(Error::invalid("logistic Hessian is not positive definite"));
                    }
                }
            }
        };

        // Backtracking damped step.
        let base = objective(&x, labels, &weights, l2_strength);
        let mut scale = 1.0;
        loop {
            let mut candidate = weights.clone();
            for c in 0..n_classes {
                for i in 0..d1 {
                    candidate[[c, i]] -= scale * step[c * d1 + i];
                }
            }
            let value = objective(&x, labels, &candidate, l2_strength);
            if value <= base || scale < 1e-8 {
                weights = candidate;
                break;
            }
            scale *= 0.5;
        }
    }

    Ok(LogisticModel {
        weights,
        l2_strength,
        final_gradient_norm: grad_norm,
    })
}

impl LogisticModel {
    pub fn probabilities(&self, features: &ArrayView2<f64>) -> Array2<f64> {
        let x = design_matrix(features);
        logistic_probs(&x, &self.weights)
    }
}

/// Classifier backbone (no dropout) plus the last-layer logistic model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaplaceDetector {
    pub backbone: Backbone,
    pub logistic: LogisticModel,
}

pub fn fit_bnn_laplace(data: &LabeledDataset, seed: u64) -> Result<LaplaceDetector> {
    let arch = ArchDescriptor::baseline(data.n_features(), data.n_classes()).with_dropout(0.0);
    let opt = OptimizerConfig::baseline(seed);
    let backbone = train_classifier(data, &arch, 0.0, &opt)
        .map_err(|e| e.in_component("laplace backbone"))?
        .model;
    let (x_train, y_train) = data.train_rows();
    let penult = backbone.forward(&x_train.view())?.penultimate;
    let logistic = fit_logistic(&penult.view(), &y_train, 1.0)
        .map_err(|e| e.in_component("last-layer logistic"))?;
    Ok(LaplaceDetector { backbone, logistic })
}

impl LaplaceDetector {
    pub fn class_probabilities(&self, features: &ArrayView2<f64>) -> Result<Array2<f64>> {
        let penult = self.backbone.forward(features)?.penultimate;
        Ok(self.logistic.probabilities(&penult.view()))
    }

    pub fn score(&self, features: &ArrayView2<f64>) -> Result<Vec<f64>> {
        let probs = self.class_probabilities(features)?;
        Ok(probs
            .rows()
            .into_iter()
            .map(|r| -r.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .collect())
    }
}
