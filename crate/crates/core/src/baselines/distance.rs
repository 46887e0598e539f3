//! Distance- and discriminator-based baselines: penultimate-feature
//! Mahalanobis distance, and the in-vs-noise classifier trained against
//! per-feature mean + 2x-std Gaussian noise.

use ndarray::{Array2, ArrayView2};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::loss::softmax_rows;
use crate::nn::{
    train_classifier, train_with_loss, ArchDescriptor, Backbone, OptimizerConfig, TargetBuffer,
    TrainLoss,
};
use crate::seeding::rng_from_seed;
use crate::signals::{fit_mahalanobis, FeatureSpace, MahalanobisModel};

/// Classifier backbone plus class means and tied covariance in its
/// penultimate feature space. The anomaly score is the positive distance to
/// the nearest class mean.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MahalanobisDetector {
    pub backbone: Backbone,
    pub model: MahalanobisModel,
}

pub fn fit_mahalanobis_baseline(data: &LabeledDataset, seed: u64) -> Result<MahalanobisDetector> {
    let arch = ArchDescriptor::baseline(data.n_features(), data.n_classes());
    let opt = OptimizerConfig::baseline(seed);
    let backbone = train_classifier(data, &arch, 0.0, &opt)
        .map_err(|e| e.in_component("mahalanobis backbone"))?
        .model;
    let (x_train, y_train) = data.train_rows();
    let penult = backbone.forward(&x_train.view())?.penultimate;
    let model = fit_mahalanobis(&penult.view(), &y_train, FeatureSpace::PlainFeature)
        .map_err(|e| e.in_component("mahalanobis baseline"))?;
    Ok(MahalanobisDetector { backbone, model })
}

impl MahalanobisDetector {
    pub fn score(&self, features: &ArrayView2<f64>) -> Result<Vec<f64>> {
        let penult = self.backbone.forward(features)?.penultimate;
        Ok(penult
            .rows()
            .into_iter()
            .map(|row| self.model.distance(&row))
            .collect())
    }
}

/// Binary in-vs-noise classifier with per-feature noise: each noise feature
/// is drawn as `N(mean_j, (2 * std_j)^2)` from training statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UsdDetector {
    pub model: Backbone,
    pub noise_model: String,
}

pub fn fit_usd_baseline(data: &LabeledDataset, seed: u64) -> Result<UsdDetector> {
    let (x_train, _) = data.train_rows();
    let n = x_train.nrows();
    let d = x_train.ncols();
    if n < 4 {
        return Err(Error::invalid("in-vs-noise baseline needs more rows"));
    }

    // Per-feature mean and (population) std of the training rows.
    let mut means = vec![0.0f64; d];
    let mut stds = vec![0.0f64; d];
    for row in x_train.rows() {
        for j in 0..d {
            means[j] += row[j];
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }
    for row in x_train.rows() {
        for j in 0..d {
            let c = row[j] - means[j];
            stds[j] += c * c;
        }
    }
    for s in &mut stds {
        *s = (*s / n as f64).sqrt();
    }

    let mut rng = rng_from_seed(crate::seeding::derive_seed(seed, &["usd-baseline-noise"]));
    let noise = Array2::from_shape_fn((n, d), |(_, j)| {
        means[j]
            + 2.0 * stds[j] * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
    });

    let mut combined = Array2::<f64>::zeros((2 * n, d));
    combined.slice_mut(ndarray::s![..n, ..]).assign(&x_train);
    combined.slice_mut(ndarray::s![n.., ..]).assign(&noise);
    let labels: Vec<usize> = (0..2 * n).map(|i| usize::from(i >= n)).collect();

    let mut order: Vec<usize> = (0..2 * n).collect();
    {
        use rand::seq::SliceRandom;
        let mut rng = rng_from_seed(crate::seeding::derive_seed(seed, &["usd-baseline-split"]));
        order.shuffle(&mut rng);
    }
    let n_fit = (order.len() * 4) / 5;
    let gather = |idx: &[usize]| -> (Array2<f64>, Vec<usize>) {
        let mut x = Array2::<f64>::zeros((idx.len(), d));
        let mut y = Vec::with_capacity(idx.len());
        for (row, &i) in idx.iter().enumerate() {
            x.row_mut(row).assign(&combined.row(i));
            y.push(labels[i]);
        }
        (x, y)
    };
    let (x_fit, y_fit) = gather(&order[..n_fit]);
    let (x_val, y_val) = gather(&order[n_fit..]);

    let arch = ArchDescriptor::binary_ood_classifier(d);
    let opt = OptimizerConfig::baseline(seed);
    let outcome = train_with_loss(
        &x_fit.view(),
        &TargetBuffer::Classes(y_fit),
        &x_val.view(),
        &TargetBuffer::Classes(y_val),
        &arch,
        TrainLoss::CrossEntropy { gauss_lambda: 0.0 },
        &opt,
    )
    .map_err(|e| e.in_component("usd baseline"))?;

    Ok(UsdDetector {
        model: outcome.model,
        noise_model: "gaussian(mean_j, (2*std_j)^2) per feature".to_string(),
    })
}

impl UsdDetector {
    /// Probability of the noise class.
    pub fn score(&self, features: &ArrayView2<f64>) -> Result<Vec<f64>> {
        let out = self.model.forward(features)?;
        let probs = softmax_rows(&out.logits.view());
        Ok(probs.column(1).to_vec())
    }
}
