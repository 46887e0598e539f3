//! Twelve reference detectors behind one fit/score surface. Every detector
//! consumes a standardized, split-tagged dataset and emits an anomaly score
//! oriented higher-is-more-anomalous, plus class probabilities where the
//! underlying model defines them.

pub mod confidence;
pub mod conformal;
pub mod distance;
pub mod duq;
pub mod evidential;
pub mod laplace;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::Result;

/// Monte Carlo samples drawn by the stochastic detectors at test time.
pub const MC_SAMPLES: usize = 30;

/// Miscoverage level shared by the conformal variants, as an exact rational.
pub const CONFORMAL_ALPHA_NUMER: usize = 1;
pub const CONFORMAL_ALPHA_DENOM: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    DeepEnsembles,
    McDropout,
    BnnLaplace,
    Benn,
    Evidential,
    Duq,
    Conformal,
    UTraCe,
    CqrAps,
    Odin,
    Mahalanobis,
    Usd,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 12] = [
        BaselineKind::DeepEnsembles,
        BaselineKind::McDropout,
        BaselineKind::BnnLaplace,
        BaselineKind::Benn,
        BaselineKind::Evidential,
        BaselineKind::Duq,
        BaselineKind::Conformal,
        BaselineKind::UTraCe,
        BaselineKind::CqrAps,
        BaselineKind::Odin,
        BaselineKind::Mahalanobis,
        BaselineKind::Usd,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::DeepEnsembles => "deep_ensembles",
            BaselineKind::McDropout => "mc_dropout",
            BaselineKind::BnnLaplace => "bnn_laplace",
            BaselineKind::Benn => "benn",
            BaselineKind::Evidential => "evidential",
            BaselineKind::Duq => "duq",
            BaselineKind::Conformal => "conformal",
            BaselineKind::UTraCe => "utrace",
            BaselineKind::CqrAps => "cqr_aps",
            BaselineKind::Odin => "odin",
            BaselineKind::Mahalanobis => "mahalanobis",
            BaselineKind::Usd => "usd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.name() == s)
    }
}

/// Shared provenance for a fitted baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineManifest {
    pub kind: BaselineKind,
    pub seed: u64,
    pub mc_samples: usize,
}

/// A fitted baseline detector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum BaselineDetector {
    DeepEnsembles(confidence::EnsembleDetector),
    McDropout(confidence::McDropoutDetector),
    BnnLaplace(laplace::LaplaceDetector),
    Benn(confidence::McDropoutDetector),
    Evidential(evidential::EvidentialDetector),
    Duq(duq::DuqDetector),
    Conformal(conformal::ConformalDetector),
    UTraCe(conformal::ConformalDetector),
    CqrAps(conformal::ConformalDetector),
    Odin(confidence::OdinDetector),
    Mahalanobis(distance::MahalanobisDetector),
    Usd(distance::UsdDetector),
}

/// Fits one baseline on the train/val splits of `data`.
pub fn baseline_fit(
    kind: BaselineKind,
    data: &LabeledDataset,
    seed: u64,
) -> Result<BaselineDetector> {
    let fitted = match kind {
        BaselineKind::DeepEnsembles => {
            BaselineDetector::DeepEnsembles(confidence::fit_deep_ensembles(data, seed)?)
        }
        BaselineKind::McDropout => {
            BaselineDetector::McDropout(confidence::fit_mc_dropout(data, seed)?)
        }
        BaselineKind::BnnLaplace => {
            BaselineDetector::BnnLaplace(laplace::fit_bnn_laplace(data, seed)?)
        }
        BaselineKind::Benn => BaselineDetector::Benn(confidence::fit_benn(data, seed)?),
        BaselineKind::Evidential => {
            BaselineDetector::Evidential(evidential::fit_evidential(data, seed)?)
        }
        BaselineKind::Duq => BaselineDetector::Duq(duq::fit_duq(data, seed)?),
        BaselineKind::Conformal => BaselineDetector::Conformal(conformal::fit_conformal(
            data,
            seed,
            conformal::ConformalVariant::InverseProbability,
        )?),
        BaselineKind::UTraCe => BaselineDetector::UTraCe(conformal::fit_conformal(
            data,
            seed,
            conformal::ConformalVariant::Entropy,
        )?),
        BaselineKind::CqrAps => BaselineDetector::CqrAps(conformal::fit_conformal(
            data,
            seed,
            conformal::ConformalVariant::AdaptiveSets,
        )?),
        BaselineKind::Odin => BaselineDetector::Odin(confidence::fit_odin(data, seed)?),
        BaselineKind::Mahalanobis => {
            BaselineDetector::Mahalanobis(distance::fit_mahalanobis_baseline(data, seed)?)
        }
        BaselineKind::Usd => BaselineDetector::Usd(distance::fit_usd_baseline(data, seed)?),
    };
    Ok(fitted)
}

impl BaselineDetector {
    pub fn kind(&self) -> BaselineKind {
        match self {
            BaselineDetector::DeepEnsembles(_) => BaselineKind::DeepEnsembles,
            BaselineDetector::McDropout(_) => BaselineKind::McDropout,
            BaselineDetector::BnnLaplace(_) => BaselineKind::BnnLaplace,
            BaselineDetector::Benn(_) => BaselineKind::Benn,
            BaselineDetector::Evidential(_) => BaselineKind::Evidential,
            BaselineDetector::Duq(_) => BaselineKind::Duq,
            BaselineDetector::Conformal(_) => BaselineKind::Conformal,
            BaselineDetector::UTraCe(_) => BaselineKind::UTraCe,
            BaselineDetector::CqrAps(_) => BaselineKind::CqrAps,
            BaselineDetector::Odin(_) => BaselineKind::Odin,
            BaselineDetector::Mahalanobis(_) => BaselineKind::Mahalanobis,
            BaselineDetector::Usd(_) => BaselineKind::Usd,
        }
    }

    /// Anomaly scores (higher = more anomalous). `mc_seed` drives the
    /// stochastic detectors' test-time sampling; deterministic detectors
    /// ignore it.
    pub fn score(&self, features: &ArrayView2<f64>, mc_seed: u64) -> Result<Vec<f64>> {
        match self {
            BaselineDetector::DeepEnsembles(d) => d.score(features),
            BaselineDetector::McDropout(d) | BaselineDetector::Benn(d) => {
                d.score(features, mc_seed)
            }
            BaselineDetector::BnnLaplace(d) => d.score(features),
            BaselineDetector::Evidential(d) => d.score(features),
            BaselineDetector::Duq(d) => d.score(features),
            BaselineDetector::Conformal(d)
            | BaselineDetector::UTraCe(d)
            | BaselineDetector::CqrAps(d) => d.score(features),
            BaselineDetector::Odin(d) => d.score(features),
            BaselineDetector::Mahalanobis(d) => d.score(features),
            BaselineDetector::Usd(d) => d.score(features),
        }
    }

    /// Class probabilities for the confident-error metric, where defined.
    pub fn class_probabilities(
        &self,
        features: &ArrayView2<f64>,
        mc_seed: u64,
    ) -> Result<Option<Array2<f64>>> {
        match self {
            BaselineDetector::DeepEnsembles(d) => d.class_probabilities(features).map(Some),
            BaselineDetector::McDropout(d) | BaselineDetector::Benn(d) => {
                d.class_probabilities(features, mc_seed).map(Some)
            }
            BaselineDetector::BnnLaplace(d) => d.class_probabilities(features).map(Some),
            BaselineDetector::Evidential(d) => d.class_probabilities(features).map(Some),
            BaselineDetector::Duq(_) => Ok(None),
            BaselineDetector::Conformal(d)
            | BaselineDetector::UTraCe(d)
            | BaselineDetector::CqrAps(d) => d.class_probabilities(features).map(Some),
            BaselineDetector::Odin(d) => d.class_probabilities(features).map(Some),
            BaselineDetector::Mahalanobis(_) | BaselineDetector::Usd(_) => Ok(None),
        }
    }
}

/// Order statistic used by split-conformal calibration: the
/// `ceil((n + 1) * (1 - alpha))`-th smallest score (clamped to the sample),
/// computed in exact integer arithmetic for alpha = 1/10.
pub fn conformal_quantile(scores: &[f64]) -> f64 {
    let n = scores.len();
    assert!(n > 0, "empty calibration set");
    let k = ((CONFORMAL_ALPHA_DENOM - CONFORMAL_ALPHA_NUMER) * (n + 1))
        .div_ceil(CONFORMAL_ALPHA_DENOM)
        .clamp(1, n);
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite score"));
    sorted[k - 1]
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::data::dataset::{DatasetMeta, SplitTag};
    use crate::data::split;
    use crate::seeding::rng_from_seed;
    use ndarray::Array2;
    use rand_distr::{Distribution, StandardNormal};

    /// Two separable Gaussian blobs with an 80/20 split, shared by the
    /// per-detector tests.
    pub(crate) fn blob_data(n: usize, seed: u64) -> LabeledDataset {
        let mut rng = rng_from_seed(seed);
        let mut features = Array2::<f64>::zeros((n, 2));
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % 2;
            let center = if class == 0 { -2.0 } else { 2.0 };
            features[[i, 0]] = center
                + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
            features[[i, 1]] =
                <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
            labels.push(class);
        }
        let mut data = LabeledDataset::with_tag(
            features,
            labels,
            SplitTag::Train,
            DatasetMeta {
                name: "blobs".to_string(),
                variant: "regular".to_string(),
                seed,
                columns: vec!["x".to_string(), "y".to_string()],
            },
        )
        .unwrap();
        split(&mut data, 0.8, seed ^ 0xaa).unwrap();
        data
    }
}
