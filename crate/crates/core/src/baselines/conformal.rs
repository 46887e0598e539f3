//! Split-conformal detectors. All three variants share the classifier and
//! the calibration machinery and differ only in the nonconformity score:
//!
//! - inverse probability `1 - p_y` (sets contain classes with `p >= 1 - q`);
//! - softmax entropy (label-free: the set is all classes or none);
//! - adaptive sets from descending cumulative probabilities (the set walks
//!   ranks while the cumulative sum stays within `q`).
//!
//! The prediction-set size is the anomaly proxy in every variant.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::baselines::conformal_quantile;
use crate::data::LabeledDataset;
use crate::error::Result;
use crate::nn::loss::softmax_rows;
use crate::nn::{train_classifier, ArchDescriptor, Backbone, OptimizerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConformalVariant {
    InverseProbability,
    Entropy,
    AdaptiveSets,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConformalDetector {
    pub model: Backbone,
    pub variant: ConformalVariant,
    /// Calibration threshold from the validation split.
    pub threshold: f64,
}

fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .map(|&p| if p > 0.0 { p * p.ln() } else { 0.0 })
        .sum::<f64>()
}

/// Cumulative probability mass at the rank of the true class when classes
/// are sorted by descending probability (inclusive of the true class).
fn cumulative_at_true_class(probs: &[f64], label: usize) -> f64 {
    let own = probs[label];
    let mass_above: f64 = probs.iter().filter(|&&p| p > own).sum();
    // Ties share the rank; include every tied class up to and including the
    // true one in input order for determinism.
    let tied_before: f64 = probs
        .iter()
        .enumerate()
        .filter(|(c, &p)| p == own && *c < label)
        .map(|(_, &p)| p)
        .sum();
    mass_above + tied_before + own
}

pub fn fit_conformal(
    data: &LabeledDataset,
    seed: u64,
    variant: ConformalVariant,
) -> Result<ConformalDetector> {
    let arch = ArchDescriptor::baseline(data.n_features(), data.n_classes());
    let opt = OptimizerConfig::baseline(seed);
    let model = train_classifier(data, &arch, 0.0, &opt)
        .map_err(|e| e.in_component("conformal classifier"))?
        .model;

    // Calibration on the validation split.
    let (x_val, y_val) = data.val_rows();
    let probs = softmax_rows(&model.forward(&x_val.view())?.logits.view());
    let scores: Vec<f64> = probs
        .rows()
        .into_iter()
        .zip(y_val.iter())
        .map(|(row, &y)| {
            let row = row.as_slice().expect("contiguous");
            match variant {
                ConformalVariant::InverseProbability => 1.0 - row[y],
                ConformalVariant::Entropy => entropy(row),
                ConformalVariant::AdaptiveSets => cumulative_at_true_class(row, y),
            }
        })
        .collect();
    let threshold = conformal_quantile(&scores);

    Ok(ConformalDetector {
        model,
        variant,
        threshold,
    })
}

impl ConformalDetector {
    /// Prediction-set size per row.
    pub fn set_sizes(&self, features: &ArrayView2<f64>) -> Result<Vec<usize>> {
        let probs = softmax_rows(&self.model.forward(features)?.logits.view());
        let q = self.threshold;
        Ok(probs
            .rows()
            .into_iter()
            .map(|row| {
                let row = row.as_slice().expect("contiguous");
                match self.variant {
                    ConformalVariant::InverseProbability => {
                        row.iter().filter(|&&p| p >= 1.0 - q).count()
                    }
                    ConformalVariant::Entropy => {
                        if entropy(row) <= q {
                            row.len()
                        } else {
                            0
                        }
                    }
                    ConformalVariant::AdaptiveSets => {
                        let mut order: Vec<usize> = (0..row.len()).collect();
                        order.sort_by(|&a, &b| {
                            row[b].partial_cmp(&row[a]).expect("finite").then(a.cmp(&b))
                        });
                        let mut cumulative = 0.0;
                        let mut size = 0;
                        for &c in &order {
                            cumulative += row[c];
                            if cumulative <= q + 1e-12 {
                                size += 1;
                            } else {
                                break;
                            }
                        }
                        size
                    }
                }
            })
            .collect())
    }

    /// Set size as the anomaly score.
    pub fn score(&self, features: &ArrayView2<f64>) -> Result<Vec<f64>> {
        Ok(self
            .set_sizes(features)?
            .into_iter()
            .map(|s| s as f64)
            .collect())
    }

    /// Fraction of rows whose true label falls inside the prediction set.
    pub fn coverage(&self, features: &ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
        let probs = softmax_rows(&self.model.forward(features)?.logits.view());
        let q = self.threshold;
        let mut covered = 0usize;
        for (row, &y) in probs.rows().into_iter().zip(labels.iter()) {
            let row = row.as_slice().expect("contiguous");
            let inside = match self.variant {
                ConformalVariant::InverseProbability => row[y] >= 1.0 - q,
                ConformalVariant::Entropy => entropy(row) <= q,
                ConformalVariant::AdaptiveSets => cumulative_at_true_class(row, y) <= q + 1e-12,
            };
            if inside {
                covered += 1;
            }
        }
        Ok(covered as f64 / labels.len() as f64)
    }

    /// The underlying classifier's softmax (reused for the confident-error
    /// metric).
    pub fn class_probabilities(&self, features: &ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(softmax_rows(&self.model.forward(features)?.logits.view()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::testutil::blob_data;

    #[test]
    fn adaptive_set_worked_example() {
        // Sorted cumulative sums (0.6, 1.0) with q = 1.0: both classes stay
        // within the threshold, set size 2.
        let det_row = [0.6, 0.4];
        let mut order: Vec<usize> = vec![0, 1];
        order.sort_by(|&a, &b| det_row[b].partial_cmp(&det_row[a]).unwrap());
        let q = 1.0;
        let mut cumulative = 0.0;
        let mut size = 0;
        for &c in &order {
            cumulative += det_row[c];
            if cumulative <= q + 1e-12 {
                size += 1;
            }
        }
        assert_eq!(size, 2);
    }

    #[test]
    fn cumulative_at_true_class_is_inclusive() {
        approx::assert_abs_diff_eq!(cumulative_at_true_class(&[0.6, 0.4], 0), 0.6);
        approx::assert_abs_diff_eq!(cumulative_at_true_class(&[0.6, 0.4], 1), 1.0);
        approx::assert_abs_diff_eq!(cumulative_at_true_class(&[0.2, 0.5, 0.3], 2), 0.8);
    }

    #[test]
    fn set_sizes_stay_within_class_count() {
        let data = blob_data(600, 31);
        for variant in [
            ConformalVariant::InverseProbability,
            ConformalVariant::Entropy,
            ConformalVariant::AdaptiveSets,
        ] {
            let det = fit_conformal(&data, 32, variant).unwrap();
            let sizes = det.set_sizes(&data.features.view()).unwrap();
            assert!(sizes.iter().all(|&s| s <= 2), "{variant:?}");
        }
    }

    #[test]
    fn split_conformal_coverage_holds_on_exchangeable_data() {
        // Fresh exchangeable fold: coverage >= 1 - alpha - 0.03 at n = 2000.
        let data = blob_data(4000, 33);
        let holdout = blob_data(2000, 34);
        for variant in [
            ConformalVariant::InverseProbability,
            ConformalVariant::AdaptiveSets,
            ConformalVariant::Entropy,
        ] {
            let det = fit_conformal(&data, 35, variant).unwrap();
            let coverage = det
                .coverage(&holdout.features.view(), &holdout.labels)
                .unwrap();
            assert!(
                coverage >= 0.9 - 0.03,
                "{variant:?}: coverage {coverage}"
            );
        }
    }
}
