//! Closed-form signals computed from ensemble outputs: feature
//! log-likelihood, energy, entropy, mutual information, and the
//! perturbation-based confidence score.

use ndarray::{Array1, ArrayView1};

use crate::error::Result;
use crate::nn::loss::log_sum_exp;
use crate::nn::Backbone;

/// Mean over ensemble members of the standard-normal log-likelihood of the
/// penultimate features: `-(L/2) ln(2 pi) - ||h||^2 / 2`.
pub fn gauss_score(member_features: &[ArrayView1<f64>]) -> f64 {
    assert!(!member_features.is_empty(), "need at least one member");
    let l = member_features[0].len() as f64;
    let constant = -0.5 * l * (2.0 * std::f64::consts::PI).ln();
    let total: f64 = member_features
        .iter()
        .map(|h| constant - 0.5 * h.dot(h))
        .sum();
    total / member_features.len() as f64
}

/// Energy score of the mean ensemble logits: `-log sum_c exp(l_c)`,
/// computed with max subtraction.
pub fn energy_score(mean_logits: &ArrayView1<f64>) -> f64 {
    assert!(mean_logits.len() >= 2, "energy needs at least 2 classes");
    -log_sum_exp(mean_logits.as_slice().expect("contiguous"))
}

fn softmax_slice(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let denom: f64 = out.iter().sum();
    for v in &mut out {
        *v /= denom;
    }
    out
}

fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .map(|&p| if p > 0.0 { p * p.ln() } else { 0.0 })
        .sum::<f64>()
}

/// Entropy of the member-averaged softmax, and the mutual-information
/// decomposition: that entropy minus the mean member entropy.
pub fn entropy_and_mi(member_logits: &[ArrayView1<f64>]) -> (f64, f64) {
    assert!(!member_logits.is_empty(), "need at least one member");
    let c = member_logits[0].len();
    let mut mean_probs = vec![0.0; c];
    let mut mean_entropy = 0.0;
    for logits in member_logits {
        let probs = softmax_slice(logits.as_slice().expect("contiguous"));
        for (acc, p) in mean_probs.iter_mut().zip(probs.iter()) {
            *acc += p;
        }
        mean_entropy += entropy(&probs);
    }
    let m = member_logits.len() as f64;
    for p in &mut mean_probs {
        *p /= m;
    }
    mean_entropy /= m;
    let total_entropy = entropy(&mean_probs);
    (total_entropy, total_entropy - mean_entropy)
}

/// Sign with `sign(0) = 0`, matching the convention of the perturbation
/// literature rather than `f64::signum`.
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Temperature-scaled confidence after a confidence-ascending input
/// perturbation, averaged over ensemble members.
///
/// Per member: step the input by `epsilon` along the sign of the gradient of
/// `log max_c softmax(logits / temperature)_c`, then take the max
/// temperature-scaled softmax at the perturbed point.
pub fn odin_score(
    ensemble: &[Backbone],
    x: &ArrayView1<f64>,
    temperature: f64,
    epsilon: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for member in ensemble {
        let grad = member.input_gradient(x, temperature)?;
        let perturbed: Array1<f64> = x
            .iter()
            .zip(grad.iter())
            .map(|(&xi, &gi)| xi + epsilon * sign(gi))
            .collect();
        let batch = perturbed.insert_axis(ndarray::Axis(0));
        let out = member.forward(&batch.view())?;
        let scaled: Vec<f64> = out.logits.row(0).iter().map(|v| v / temperature).collect();
        let probs = softmax_slice(&scaled);
        total += probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    }
    Ok(total / ensemble.len() as f64)
}
