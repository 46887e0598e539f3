//! In-vs-noise binary classifier: trained to separate the training data from
//! draws of `N(0, 4 * Sigma)` with `Sigma` the empirical train covariance.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_ridge, gaussian_rows, sample_covariance};
use crate::nn::loss::softmax_rows;
use crate::nn::{train_with_loss, ArchDescriptor, Backbone, OptimizerConfig, TargetBuffer, TrainLoss};
use crate::seeding::rng_from_seed;

/// Provenance of a fitted in-vs-noise classifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UsdManifest {
    pub noise_model: String,
    pub n_train: usize,
    pub n_noise: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UsdClassifier {
    pub model: Backbone,
    pub manifest: UsdManifest,
}

/// Builds the noise sample `N(0, 4 * Sigma)` for the given training matrix.
/// Returns the noise rows and the ridge (if any) needed to factor the scaled
/// covariance.
pub fn scaled_covariance_noise(
    train: &ArrayView2<f64>,
    n_noise: usize,
    seed: u64,
) -> Result<(Array2<f64>, f64)> {
    let cov = sample_covariance(train);
    let scaled = &cov * 4.0;
    let (chol, ridge) = cholesky_with_ridge(&scaled)?;
    let mut rng = rng_from_seed(seed);
    Ok((gaussian_rows(&chol, n_noise, &mut rng), ridge))
}

/// Trains the binary classifier on train rows (label 0) versus an equal
/// count of covariance-scaled Gaussian noise (label 1), 20 epochs.
pub fn train_usd(train: &ArrayView2<f64>, seed: u64) -> Result<UsdClassifier> {
    let n = train.nrows();
    let d = train.ncols();
    if n < 2 * d {
        return Err(Error::invalid(format!(
            "in-vs-noise training needs at least 2 * d = {} rows, got {n}",
            2 * d
        )));
    }
    let (noise, _ridge) = scaled_covariance_noise(train, n, crate::seeding::derive_seed(seed, &["usd-noise"]))?;

    let mut combined = Array2::<f64>::zeros((2 * n, d));
    combined.slice_mut(ndarray::s![..n, ..]).assign(train);
    combined.slice_mut(ndarray::s![n.., ..]).assign(&noise);
    let labels: Vec<usize> = (0..2 * n).map(|i| usize::from(i >= n)).collect();

    // Deterministic 80/20 split of the combined pool for the early-stopping
    // metric (the 20-epoch budget rarely stops early).
    let mut order: Vec<usize> = (0..2 * n).collect();
    {
        use rand::seq::SliceRandom;
        let mut rng = rng_from_seed(crate::seeding::derive_seed(seed, &["usd-split"]));
        order.shuffle(&mut rng);
    }
    let n_train = (order.len() * 4) / 5;
    let gather = |idx: &[usize]| -> (Array2<f64>, Vec<usize>) {
        let mut x = Array2::<f64>::zeros((idx.len(), d));
        let mut y = Vec::with_capacity(idx.len());
        for (row, &i) in idx.iter().enumerate() {
            x.row_mut(row).assign(&combined.row(i));
            y.push(labels[i]);
        }
        (x, y)
    };
    let (x_train, y_train) = gather(&order[..n_train]);
    let (x_val, y_val) = gather(&order[n_train..]);

    let arch = ArchDescriptor::binary_ood_classifier(d);
    let opt = OptimizerConfig::binary_ood(seed);
    let outcome = train_with_loss(
        &x_train.view(),
        &TargetBuffer::Classes(y_train),
        &x_val.view(),
        &TargetBuffer::Classes(y_val),
        &arch,
        TrainLoss::CrossEntropy { gauss_lambda: 0.0 },
        &opt,
    )
    .map_err(|e| e.in_component("usd classifier"))?;

    Ok(UsdClassifier {
        model: outcome.model,
        manifest: UsdManifest {
            noise_model: "gaussian(0, 4*train_covariance)".to_string(),
            n_train: n,
            n_noise: n,
            seed,
        },
    })
}

impl UsdClassifier {
    /// Softmax probability of the noise class.
    pub fn score(&self, x: &ArrayView1<f64>) -> Result<f64> {
        let batch = x.to_owned().insert_axis(Axis(0));
        Ok(self.scores_batch(&batch.view())?[0])
    }

    pub fn scores_batch(&self, x: &ArrayView2<f64>) -> Result<Vec<f64>> {
        let out = self.model.forward(x)?;
        let probs = softmax_rows(&out.logits.view());
        Ok(probs.column(1).to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_train(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = rng_from_seed(seed);
        Array2::from_shape_fn((n, d), |_| {
            <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        })
    }

    #[test]
    fn noise_covariance_is_four_times_empirical() {
        // The Cholesky factor used by the sampler must reproduce 4 * Sigma.
        let train = gaussian_train(300, 3, 1);
        let cov = sample_covariance(&train.view());
        let scaled = &cov * 4.0;
        let (chol, ridge) = cholesky_with_ridge(&scaled).unwrap();
        assert_eq!(ridge, 0.0);
        let rebuilt = chol.factor().dot(&chol.factor().t());
        for (a, b) in scaled.iter().zip(rebuilt.iter()) {
            approx::assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
        // And the empirical covariance of a large noise draw is close to it.
        let (noise, _) = scaled_covariance_noise(&train.view(), 20_000, 5).unwrap();
        let noise_cov = sample_covariance(&noise.view());
        for i in 0..3 {
            let rel = (noise_cov[[i, i]] - scaled[[i, i]]).abs() / scaled[[i, i]];
            assert!(rel < 0.1, "diagonal {i}: {rel}");
        }
    }

    #[test]
    fn scores_are_probabilities_and_far_points_score_high() {
        let train = gaussian_train(400, 2, 2);
        let clf = train_usd(&train.view(), 3).unwrap();
        let scores = clf.scores_batch(&train.view()).unwrap();
        assert!(scores.iter().all(|s| (0.0..=1.0).contains(s)));
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = sorted[sorted.len() / 2];

        // A point 10 per-feature standard deviations out scores above the
        // train median, across 5 seeds.
        for seed in 10..15 {
            let train = gaussian_train(400, 2, seed);
            let clf = train_usd(&train.view(), seed ^ 0xbeef).unwrap();
            let far = ndarray::array![10.0, 10.0];
            let far_score = clf.score(&far.view()).unwrap();
            let scores = clf.scores_batch(&train.view()).unwrap();
            let mut sorted = scores;
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = sorted[sorted.len() / 2];
            assert!(
                far_score > median,
                "seed {seed}: far {far_score} vs median {median}"
            );
        }
        let _ = median;
    }

    #[test]
    fn too_few_rows_are_refused() {
        let train = gaussian_train(5, 3, 4);
        assert!(train_usd(&train.view(), 1).is_err());
    }
}
