//! Class-conditional Mahalanobis scoring with a pooled (tied) covariance.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{condition_number, Cholesky};

/// Which space the model was fitted in; scoring is identical, the tag keeps
/// persistence bundles self-describing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSpace {
    PlainFeature,
    InputSpace,
}

/// Class means plus the inverse of the pooled covariance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MahalanobisModel {
    pub class_means: Vec<Array1<f64>>,
    pub precision: Array2<f64>,
    pub space_tag: FeatureSpace,
    /// Ridge added to the covariance diagonal before inversion (0 when the
    /// raw pooled covariance was well conditioned).
    pub ridge: f64,
}

/// Pooled within-class covariance with divisor `N - C`.
pub fn pooled_covariance(
    features: &ArrayView2<f64>,
    labels: &[usize],
    class_means: &[Array1<f64>],
) -> Array2<f64> {
    let d = features.ncols();
    let n = features.nrows();
    let c = class_means.len();
    let mut cov = Array2::<f64>::zeros((d, d));
    for (row, &label) in features.rows().into_iter().zip(labels.iter()) {
        let r = &row - &class_means[label];
        for i in 0..d {
            for j in 0..=i {
                cov[[i, j]] += r[i] * r[j];
            }
        }
    }
    let denom = (n - c) as f64;
    for i in 0..d {
        for j in 0..=i {
            let v = cov[[i, j]] / denom;
            cov[[i, j]] = v;
            cov[[j, i]] = v;
        }
    }
    cov
}

/// Fits class means and the tied-covariance precision. A singular or badly
/// conditioned covariance (condition number above 1e10) is ridge-regularized
/// with `1e-6 * trace / d` per escalation step; the ridge used is recorded
/// on the model and logged, never silent.
pub fn fit_mahalanobis(
    features: &ArrayView2<f64>,
    labels: &[usize],
    space_tag: FeatureSpace,
) -> Result<MahalanobisModel> {
    let n = features.nrows();
    let d = features.ncols();
    if n != labels.len() {
        return Err(Error::invalid("feature rows and labels differ"));
    }
    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    if n_classes < 1 {
        return Err(Error::invalid("no labels"));
    }
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    if let Some(class) = counts.iter().position(|&c| c < 2) {
        return Err(Error::invalid(format!(
            "class {class} has fewer than 2 rows"
        )));
    }
    if n <= n_classes {
        return Err(Error::invalid("need more rows than classes"));
    }

    let mut class_means = vec![Array1::<f64>::zeros(d); n_classes];
    for (row, &label) in features.rows().into_iter().zip(labels.iter()) {
        class_means[label] += &row;
    }
    for (mean, &count) in class_means.iter_mut().zip(counts.iter()) {
        mean.mapv_inplace(|v| v / count as f64);
    }

    let mut cov = pooled_covariance(features, labels, &class_means);
    let ridge_step = 1e-6 * cov.diag().sum() / d as f64;
    let mut ridge_total = 0.0;
    let chol = loop {
        let ok = match Cholesky::new(&cov.view()) {
            Some(chol) => {
                if condition_number(&cov.view(), &chol) <= 1e10 {
                    Some(chol)
                } else {
                    None
                }
            }
            None => None,
        };
        match ok {
            Some(chol) => break chol,
            None => {
                if ridge_total > 1e6 * ridge_step.max(1e-12) {
                    return Err(Error::invalid(
                        "pooled covariance could not be conditioned by ridge regularization",
                    ));
                }
                let step = ridge_step.max(1e-12);
                for i in 0..d {
                    cov[[i, i]] += step;
                }
                ridge_total += step;
            }
        }
    };
    if ridge_total > 0.0 {
        log::warn!(
            "mahalanobis ({space_tag:?}): pooled covariance ridge-regularized with {ridge_total:e}"
        );
    }
    let precision = chol.inverse();
    Ok(MahalanobisModel {
        class_means,
        precision,
        space_tag,
        ridge: ridge_total,
    })
}

impl MahalanobisModel {
    /// Negative squared Mahalanobis distance to the nearest class mean;
    /// 0 is the maximum attainable value.
    pub fn score(&self, x: &ArrayView1<f64>) -> f64 {
        let mut best = f64::INFINITY;
        for mean in &self.class_means {
            let r = x - mean;
            let quad = r.dot(&self.precision.dot(&r));
            if quad < best {
                best = quad;
            }
        }
        -best
    }

    /// Positive nearest-class distance, for detectors that want the raw
    /// distance orientation.
    pub fn distance(&self, x: &ArrayView1<f64>) -> f64 {
        -self.score(x)
    }

    pub fn scores_batch(&self, x: &ArrayView2<f64>) -> Vec<f64> {
        x.rows().into_iter().map(|row| self.score(&row)).collect()
    }
}
