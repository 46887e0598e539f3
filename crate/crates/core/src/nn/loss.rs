//! Training losses and their gradients.
//!
//! Everything here is checked against central finite differences in the test
//! suite, so gradient expressions are written out explicitly rather than
//! relying on an autodiff layer.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};

/// Loss used by the shared training loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainLoss {
    /// Softmax cross-entropy plus `gauss_lambda` times the feature-moment
    /// regularizer on the penultimate activations.
    CrossEntropy { gauss_lambda: f64 },
    /// Cross-entropy minus `coefficient` times the mean softmax entropy
    /// (pushes outputs toward uniform).
    EntropyPenalized { coefficient: f64 },
    /// Dirichlet evidential loss with KL annealing weight
    /// `min(1, epoch / anneal_epochs)`.
    Evidential { anneal_epochs: usize },
    /// Mean squared error on a single output (regression).
    SquaredError,
}

/// Targets for the shared training loop.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Classes(&'a [usize]),
    Values(&'a [f64]),
}

/// Loss value plus gradients w.r.t. logits and (optionally) the penultimate
/// features.
pub struct LossEval {
    pub loss: f64,
    pub grad_logits: Array2<f64>,
    pub grad_penultimate: Option<Array2<f64>>,
}

/// Feature-moment regularizer: squared distance of the batch's empirical mean
/// from zero plus squared distance of its population variance from one.
pub fn gauss_reg_loss(features: &ArrayView2<f64>) -> Result<f64> {
    let (loss, _) = gauss_reg_loss_grad(features)?;
    Ok(loss)
}

/// Regularizer value and its gradient w.r.t. each feature entry.
pub fn gauss_reg_loss_grad(features: &ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    let n = features.nrows();
    if n < 2 {
        return Err(Error::invalid(format!(
            "feature-moment regularizer needs at least 2 rows, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = features.mean_axis(Axis(0)).expect("nonempty");
    let mut var = Array1::<f64>::zeros(features.ncols());
    for row in features.rows() {
        for j in 0..features.ncols() {
            let c = row[j] - mean[j];
            var[j] += c * c;
        }
    }
    var.mapv_inplace(|v| v / nf);

    let loss = mean.iter().map(|m| m * m).sum::<f64>()
        + var.iter().map(|v| (v - 1.0) * (v - 1.0)).sum::<f64>();

    // d/dh_il = (2/n) [mu_l + 2 (var_l - 1)(h_il - mu_l)]
    let mut grad = features.to_owned();
    for mut row in grad.rows_mut() {
        for j in 0..row.len() {
            let centered = row[j] - mean[j];
            row[j] = (2.0 / nf) * (mean[j] + 2.0 * (var[j] - 1.0) * centered);
        }
    }
    Ok((loss, grad))
}

/// Row-wise stable softmax.
pub fn softmax_rows(logits: &ArrayView2<f64>) -> Array2<f64> {
    let mut probs = logits.to_owned();
    for mut row in probs.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            denom += *v;
        }
        for v in row.iter_mut() {
            *v /= denom;
        }
    }
    probs
}

/// Stable `log sum exp` of a slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn entropy_of(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .map(|&p| if p > 0.0 { p * p.ln() } else { 0.0 })
        .sum::<f64>()
}

/// Log of a probability that propagates NaN instead of masking it
/// (`f64::max` would silently drop a NaN operand).
fn ln_prob(p: f64) -> f64 {
    if p.is_nan() {
        f64::NAN
    } else {
        p.max(1e-300).ln()
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Trigamma via recurrence into the asymptotic regime.
pub fn trigamma(x: f64) -> f64 {
    let mut acc = 0.0;
    let mut x = x;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = 1.0 / 6.0
        + inv2
            * (-1.0 / 30.0
                + inv2 * (1.0 / 42.0 + inv2 * (-1.0 / 30.0 + inv2 * (5.0 / 66.0))));
    acc + inv * (1.0 + inv * (0.5 + inv * series))
}

/// Dirichlet concentrations from raw network outputs: `alpha = softplus(z) + 1`.
pub fn evidential_alpha(logits: &ArrayView2<f64>) -> Array2<f64> {
    logits.mapv(|z| softplus(z) + 1.0)
}

/// Evidential loss on nonnegative evidence: expected squared error under the
/// Dirichlet plus `kl_weight` times the KL of the misleading-evidence
/// distribution from the uniform Dirichlet. Mean over the batch.
pub fn evidential_loss(evidence: &ArrayView2<f64>, labels: &[usize], kl_weight: f64) -> f64 {
    let (loss, _) = evidential_loss_grad(evidence, labels, kl_weight);
    loss
}

/// Evidential loss and its gradient with respect to the evidence entries.
pub fn evidential_loss_grad(
    evidence: &ArrayView2<f64>,
    labels: &[usize],
    kl_weight: f64,
) -> (f64, Array2<f64>) {
    let n = evidence.nrows();
    let c_count = evidence.ncols();
    let cf = c_count as f64;
    assert_eq!(labels.len(), n, "one label per evidence row");
    let mut total = 0.0;
    let mut grad = Array2::<f64>::zeros((n, c_count));
    for i in 0..n {
        let y = labels[i];
        let alpha: Vec<f64> = evidence.row(i).iter().map(|e| e + 1.0).collect();
        let s: f64 = alpha.iter().sum();
        let p: Vec<f64> = alpha.iter().map(|a| a / s).collect();
        let q: f64 = p.iter().map(|v| v * v).sum();

        let mut mse = (1.0 - q) / (s + 1.0);
        for (c, &pc) in p.iter().enumerate() {
            let yc = if c == y { 1.0 } else { 0.0 };
            mse += (yc - pc) * (yc - pc);
        }

        // Misleading-evidence concentrations: true class forced to 1.
        let alpha_tilde: Vec<f64> = alpha
            .iter()
            .enumerate()
            .map(|(c, &a)| if c == y { 1.0 } else { a })
            .collect();
        let s_tilde: f64 = alpha_tilde.iter().sum();
        let mut kl = ln_gamma(s_tilde) - ln_gamma(cf);
        for &a in &alpha_tilde {
            kl -= ln_gamma(a);
            kl += (a - 1.0) * (digamma(a) - digamma(s_tilde));
        }

        total += mse + kl_weight * kl;

        let residual_dot: f64 = p
            .iter()
            .enumerate()
            .map(|(c, &pc)| {
                let yc = if c == y { 1.0 } else { 0.0 };
                (pc - yc) * pc
            })
            .sum();
        let kl_common = trigamma(s_tilde) * (s_tilde - cf);
        for c in 0..c_count {
            let yc = if c == y { 1.0 } else { 0.0 };
            let g_mse = (2.0 / s) * ((p[c] - yc) - residual_dot)
                - 2.0 * (p[c] - q) / (s * (s + 1.0))
                - (1.0 - q) / ((s + 1.0) * (s + 1.0));
            let g_kl = if c == y {
                0.0
            } else {
                (alpha_tilde[c] - 1.0) * trigamma(alpha_tilde[c]) - kl_common
            };
            grad[[i, c]] = g_mse + kl_weight * g_kl;
        }
    }
    let nf = n as f64;
    grad.mapv_inplace(|g| g / nf);
    (total / nf, grad)
}

impl TrainLoss {
    /// Evaluates the loss for a batch, returning gradients for backprop.
    pub fn eval(
        &self,
        logits: &ArrayView2<f64>,
        penultimate: &ArrayView2<f64>,
        targets: Targets<'_>,
        epoch: usize,
    ) -> Result<LossEval> {
        let n = logits.nrows();
        let nf = n as f64;
        match (self, targets) {
            (TrainLoss::CrossEntropy { gauss_lambda }, Targets::Classes(labels)) => {
                let probs = softmax_rows(logits);
                let mut loss = 0.0;
                let mut grad = probs.clone();
                for (i, &y) in labels.iter().enumerate() {
                    loss -= ln_prob(probs[[i, y]]);
                    grad[[i, y]] -= 1.0;
                }
                loss /= nf;
                grad.mapv_inplace(|g| g / nf);
                let grad_penultimate = if *gauss_lambda > 0.0 {
                    let (reg, mut reg_grad) = gauss_reg_loss_grad(penultimate)?;
                    loss += gauss_lambda * reg;
                    reg_grad.mapv_inplace(|g| g * gauss_lambda);
                    Some(reg_grad)
                } else {
                    None
                };
                Ok(LossEval {
                    loss,
                    grad_logits: grad,
                    grad_penultimate,
                })
            }
            (TrainLoss::EntropyPenalized { coefficient }, Targets::Classes(labels)) => {
                let probs = softmax_rows(logits);
                let mut loss = 0.0;
                let mut grad = probs.clone();
                for (i, &y) in labels.iter().enumerate() {
                    loss -= ln_prob(probs[[i, y]]);
                    grad[[i, y]] -= 1.0;
                }
                // Entropy bonus: loss -= coef * mean entropy.
                for (i, row) in probs.rows().into_iter().enumerate() {
                    let h = entropy_of(row.as_slice().expect("contiguous"));
                    loss -= coefficient * h;
                    for (c, &p) in row.iter().enumerate() {
                        let logp = ln_prob(p);
                        grad[[i, c]] += coefficient * p * (logp + h);
                    }
                }
                loss /= nf;
                grad.mapv_inplace(|g| g / nf);
                Ok(LossEval {
                    loss,
                    grad_logits: grad,
                    grad_penultimate: None,
                })
            }
            (TrainLoss::Evidential { anneal_epochs }, Targets::Classes(labels)) => {
                let kl_weight = if *anneal_epochs == 0 {
                    1.0
                } else {
                    (epoch as f64 / *anneal_epochs as f64).min(1.0)
                };
                let evidence = logits.mapv(softplus);
                let (loss, grad_evidence) =
                    evidential_loss_grad(&evidence.view(), labels, kl_weight);
                let mut grad = grad_evidence;
                grad.zip_mut_with(&logits.to_owned(), |g, &z| *g *= sigmoid(z));
                Ok(LossEval {
                    loss,
                    grad_logits: grad,
                    grad_penultimate: None,
                })
            }
            (TrainLoss::SquaredError, Targets::Values(values)) => {
                assert_eq!(logits.ncols(), 1, "squared error expects a single output");
                let mut loss = 0.0;
                let mut grad = Array2::<f64>::zeros((n, 1));
                for i in 0..n {
                    let r = logits[[i, 0]] - values[i];
                    loss += r * r;
                    grad[[i, 0]] = 2.0 * r / nf;
                }
                Ok(LossEval {
                    loss: loss / nf,
                    grad_logits: grad,
                    grad_penultimate: None,
                })
            }
            _ => Err(Error::invalid("loss and target kinds do not match")),
        }
    }

    /// Validation metric used for early stopping: cross-entropy for
    /// classifiers (predictive probabilities for the evidential head), mean
    /// squared error for regression.
    pub fn validation_loss(&self, logits: &ArrayView2<f64>, targets: Targets<'_>) -> f64 {
        let n = logits.nrows() as f64;
        match (self, targets) {
            (TrainLoss::Evidential { .. }, Targets::Classes(labels)) => {
                let alpha = evidential_alpha(logits);
                let mut loss = 0.0;
                for (i, &y) in labels.iter().enumerate() {
                    let s: f64 = alpha.row(i).sum();
                    loss -= ln_prob(alpha[[i, y]] / s);
                }
                loss / n
            }
            (TrainLoss::SquaredError, Targets::Values(values)) => {
                let mut loss = 0.0;
                for i in 0..logits.nrows() {
                    let r = logits[[i, 0]] - values[i];
                    loss += r * r;
                }
                loss / n
            }
            (_, Targets::Classes(labels)) => {
                let probs = softmax_rows(logits);
                let mut loss = 0.0;
                for (i, &y) in labels.iter().enumerate() {
                    loss -= ln_prob(probs[[i, y]]);
                }
                loss / n
            }
            _ => f64::NAN,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn gauss_loss_is_zero_at_target_moments() {
        // Columns with exact mean 0 and population variance 1.
        let batch = array![[1.0, -1.0], [-1.0, 1.0]];
        assert_abs_diff_eq!(gauss_reg_loss(&batch.view()).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gauss_loss_one_dimensional_case() {
        // {0, 2}: mean 1, population variance 1 -> loss 1.
        let batch = array![[0.0], [2.0]];
        assert_abs_diff_eq!(gauss_reg_loss(&batch.view()).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gauss_loss_scaling_contract() {
        // Doubling a zero-mean unit-variance batch: variance 4 -> (4-1)^2 = 9.
        let batch = array![[2.0], [-2.0]];
        assert_abs_diff_eq!(gauss_reg_loss(&batch.view()).unwrap(), 9.0, epsilon = 1e-12);
    }

    #[test]
    fn gauss_loss_refuses_single_row() {
        let batch = array![[1.0, 2.0]];
        assert!(gauss_reg_loss(&batch.view()).is_err());
    }

    #[test]
    fn gauss_grad_matches_finite_differences() {
        let batch = array![[0.3, -1.2], [0.8, 0.4], [-0.5, 2.0]];
        let (_, grad) = gauss_reg_loss_grad(&batch.view()).unwrap();
        let h = 1e-6;
        for i in 0..batch.nrows() {
            for j in 0..batch.ncols() {
                let mut plus = batch.clone();
                plus[[i, j]] += h;
                let mut minus = batch.clone();
                minus[[i, j]] -= h;
                let numeric = (gauss_reg_loss(&plus.view()).unwrap()
                    - gauss_reg_loss(&minus.view()).unwrap())
                    / (2.0 * h);
                assert_abs_diff_eq!(grad[[i, j]], numeric, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn trigamma_matches_known_values() {
        assert_abs_diff_eq!(
            trigamma(1.0),
            std::f64::consts::PI * std::f64::consts::PI / 6.0,
            epsilon = 1e-10
        );
        // trigamma(2) = pi^2/6 - 1
        assert_abs_diff_eq!(
            trigamma(2.0),
            std::f64::consts::PI * std::f64::consts::PI / 6.0 - 1.0,
            epsilon = 1e-10
        );
    }

    #[test]
    fn evidential_gradient_matches_finite_differences() {
        // Random 4-sample batch, 3 classes, including the annealed KL term.
        let evidence = array![
            [0.5, 2.0, 0.1],
            [3.0, 0.2, 0.7],
            [0.0, 0.0, 1.5],
            [1.2, 0.4, 0.9]
        ];
        let labels = [1usize, 0, 2, 2];
        let kl_weight = 0.7;
        let (_, grad) = evidential_loss_grad(&evidence.view(), &labels, kl_weight);
        let h = 1e-5;
        for i in 0..evidence.nrows() {
            for j in 0..evidence.ncols() {
                let mut plus = evidence.clone();
                plus[[i, j]] += h;
                let mut minus = evidence.clone();
                minus[[i, j]] -= h;
                let numeric = (evidential_loss(&plus.view(), &labels, kl_weight)
                    - evidential_loss(&minus.view(), &labels, kl_weight))
                    / (2.0 * h);
                let analytic = grad[[i, j]];
                let scale = analytic.abs().max(numeric.abs()).max(1e-8);
                assert!(
                    (analytic - numeric).abs() / scale < 1e-4,
                    "entry ({i},{j}): analytic {analytic} vs numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn zero_evidence_has_maximal_vacuity() {
        let logits = array![[-40.0, -40.0]];
        let alpha = evidential_alpha(&logits.view());
        let s: f64 = alpha.row(0).sum();
        let vacuity = 2.0 / s;
        assert_abs_diff_eq!(vacuity, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn entropy_penalized_gradient_matches_finite_differences() {
        let logits = array![[0.2, -0.4, 1.1], [0.9, 0.3, -0.7]];
        let labels = [2usize, 0];
        let penult = Array2::<f64>::zeros((2, 1));
        let loss = TrainLoss::EntropyPenalized { coefficient: 0.1 };
        let eval = loss
            .eval(&logits.view(), &penult.view(), Targets::Classes(&labels), 0)
            .unwrap();
        let h = 1e-6;
        for i in 0..logits.nrows() {
            for j in 0..logits.ncols() {
                let mut plus = logits.clone();
                plus[[i, j]] += h;
                let mut minus = logits.clone();
                minus[[i, j]] -= h;
                let lp = loss
                    .eval(&plus.view(), &penult.view(), Targets::Classes(&labels), 0)
                    .unwrap()
                    .loss;
                let lm = loss
                    .eval(&minus.view(), &penult.view(), Targets::Classes(&labels), 0)
                    .unwrap()
                    .loss;
                let numeric = (lp - lm) / (2.0 * h);
                assert_abs_diff_eq!(eval.grad_logits[[i, j]], numeric, epsilon = 1e-6);
            }
        }
    }
}
