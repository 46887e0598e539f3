//! The multi-signal detector: backbone training, signal-model fitting,
//! pseudo-OOD calibration, and fused scoring.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, Standardizer};
use crate::error::{Error, Result};
use crate::nn::loss::softmax_rows;
use crate::nn::{train_classifier, ArchDescriptor, Backbone, OptimizerConfig};
use crate::signals::{
    fit_causal, fit_mahalanobis, train_usd, FeatureSpace, SignalBundle, SignalSuite,
    MAX_CAUSAL_DIM,
};
use crate::spectre::calibration::{calibrate, CalibrationState};
use crate::spectre::pseudo_ood::gen_pseudo_ood;

/// Detector hyperparameters, fixed across datasets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectreConfig {
    pub ensemble_size: usize,
    pub tau: f64,
    pub pseudo_ood_size: usize,
    pub odin_temperature: f64,
    pub odin_epsilon: f64,
    /// Feature-moment regularizer weight for inputs of width <= 20.
    pub gauss_lambda_low_dim: f64,
    /// Weight for wider inputs.
    pub gauss_lambda_high_dim: f64,
    pub low_dim_threshold: usize,
}

impl Default for SpectreConfig {
    fn default() -> Self {
        Self {
            ensemble_size: 5,
            tau: 0.72,
            pseudo_ood_size: 2000,
            odin_temperature: 1000.0,
            odin_epsilon: 0.002,
            gauss_lambda_low_dim: 2.0,
            gauss_lambda_high_dim: 0.5,
            low_dim_threshold: 20,
        }
    }
}

impl SpectreConfig {
    pub fn gauss_lambda(&self, input_dim: usize) -> f64 {
        if input_dim <= self.low_dim_threshold {
            self.gauss_lambda_low_dim
        } else {
            self.gauss_lambda_high_dim
        }
    }
}

/// Provenance recorded with every fitted detector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorManifest {
    pub ensemble_size: usize,
    pub gauss_lambda: f64,
    pub causal_included: bool,
    pub input_dim: usize,
    pub n_classes: usize,
    pub seed: u64,
    pub pseudo_ood_mixes: usize,
    pub pseudo_ood_noise: usize,
    /// Seed offsets: encoder members use seed+0..seed+M-1, the plain twin
    /// seed+M, the in-vs-noise classifier seed+M+1, the structural
    /// regressors seed+M+2, pseudo-OOD generation seed+M+3.
    pub seed_scheme: String,
}

/// A fitted detector: the signal suite, the frozen calibration, and the
/// standardizer the pipeline used (kept so file-based scoring can transform
/// raw inputs identically).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectreDetector {
    pub suite: SignalSuite,
    pub calibration: CalibrationState,
    pub standardizer: Standardizer,
    pub manifest: DetectorManifest,
}

/// Trains the spectral-normalized encoder ensemble; member m uses seed
/// `seed + m`.
pub fn train_gauss_ensemble(
    data: &LabeledDataset,
    config: &SpectreConfig,
    gauss_lambda: f64,
    seed: u64,
) -> Result<Vec<Backbone>> {
    let arch = ArchDescriptor::gauss_encoder(data.n_features(), data.n_classes());
    (0..config.ensemble_size)
        .into_par_iter()
        .map(|m| {
            let opt = OptimizerConfig::backbone(seed + m as u64);
            train_classifier(data, &arch, gauss_lambda, &opt)
                .map(|outcome| outcome.model)
                .map_err(|e| e.in_component(&format!("gauss encoder {m}")))
        })
        .collect()
}

/// The ensemble-independent components: plain twin, both distance models,
/// the in-vs-noise classifier, and (for narrow data) the structural model.
#[derive(Debug, Clone)]
pub struct SharedComponents {
    pub plain: Backbone,
    pub feature_maha: crate::signals::MahalanobisModel,
    pub input_maha: crate::signals::MahalanobisModel,
    pub usd: crate::signals::UsdClassifier,
    pub causal: Option<crate::signals::CausalModel>,
}

pub fn fit_shared_components(
    data: &LabeledDataset,
    config: &SpectreConfig,
    seed: u64,
) -> Result<SharedComponents> {
    let m = config.ensemble_size as u64;
    let (x_train, y_train) = data.train_rows();

    let plain_arch = ArchDescriptor::plain_net(data.n_features(), data.n_classes());
    let plain_opt = OptimizerConfig::backbone(seed + m);
    let plain = train_classifier(data, &plain_arch, 0.0, &plain_opt)
        .map_err(|e| e.in_component("plain twin"))?
        .model;

    let plain_features = plain.forward(&x_train.view())?.penultimate;
    let feature_maha =
        fit_mahalanobis(&plain_features.view(), &y_train, FeatureSpace::PlainFeature)
            .map_err(|e| e.in_component("feature-space mahalanobis"))?;
    let input_maha = fit_mahalanobis(&x_train.view(), &y_train, FeatureSpace::InputSpace)
        .map_err(|e| e.in_component("input-space mahalanobis"))?;

    let usd = train_usd(&x_train.view(), seed + m + 1)?;

    let causal = if data.n_features() <= MAX_CAUSAL_DIM {
        Some(
            fit_causal(&x_train.view(), seed + m + 2)
                .map_err(|e| e.in_component("structural model"))?,
        )
    } else {
        None
    };

    Ok(SharedComponents {
        plain,
        feature_maha,
        input_maha,
        usd,
        causal,
    })
}

pub fn build_suite(
    ensemble: Vec<Backbone>,
    shared: SharedComponents,
    config: &SpectreConfig,
) -> SignalSuite {
    SignalSuite {
        ensemble,
        plain: shared.plain,
        feature_maha: shared.feature_maha,
        input_maha: shared.input_maha,
        usd: shared.usd,
        causal: shared.causal,
        odin_temperature: config.odin_temperature,
        odin_epsilon: config.odin_epsilon,
    }
}

/// End-to-end fit on a standardized, split-tagged dataset. Only train and
/// validation rows are touched; calibration sees validation and pseudo-OOD
/// bundles exclusively.
pub fn spectre_fit(
    data: &LabeledDataset,
    standardizer: &Standardizer,
    config: &SpectreConfig,
    seed: u64,
) -> Result<SpectreDetector> {
    let gauss_lambda = config.gauss_lambda(data.n_features());
    let ensemble = train_gauss_ensemble(data, config, gauss_lambda, seed)?;
    let shared = fit_shared_components(data, config, seed)?;
    let suite = build_suite(ensemble, shared, config);

    let (x_train, _) = data.train_rows();
    let m = config.ensemble_size as u64;
    let pseudo = gen_pseudo_ood(&x_train.view(), config.pseudo_ood_size, seed + m + 3)?;

    let (x_val, _) = data.val_rows();
    let val_bundle = suite.extract_bundle(&x_val.view())?;
    let ood_bundle = suite.extract_bundle(&pseudo.features.view())?;
    let calibration = calibrate(&val_bundle, &ood_bundle, config.tau)?;

    let manifest = DetectorManifest {
        ensemble_size: suite.ensemble.len(),
        gauss_lambda,
        causal_included: suite.causal.is_some(),
        input_dim: data.n_features(),
        n_classes: data.n_classes(),
        seed,
        pseudo_ood_mixes: pseudo.manifest.n_mixes,
        pseudo_ood_noise: pseudo.manifest.n_noise,
        seed_scheme: "members seed+0..M-1, plain seed+M, usd seed+M+1, causal seed+M+2, \
                      pseudo-ood seed+M+3"
            .to_string(),
    };

    Ok(SpectreDetector {
        suite,
        calibration,
        standardizer: standardizer.clone(),
        manifest,
    })
}

impl SpectreDetector {
    /// Fused anomaly score per row of `features` (already standardized);
    /// higher means more anomalous.
    pub fn score(&self, features: &ArrayView2<f64>) -> Result<Vec<f64>> {
        if features.ncols() != self.manifest.input_dim {
            return Err(Error::DimMismatch {
                context: "detector scoring".to_string(),
                expected: self.manifest.input_dim,
                actual: features.ncols(),
            });
        }
        let bundle = self.suite.extract_bundle(features)?;
        self.calibration.score_rows(&bundle)
    }

    /// Class probabilities from the encoder-ensemble mean softmax (used for
    /// the confident-error metric).
    pub fn class_probabilities(&self, features: &ArrayView2<f64>) -> Result<Array2<f64>> {
        let n = features.nrows();
        let c = self.manifest.n_classes;
        let mut mean = Array2::<f64>::zeros((n, c));
        for member in &self.suite.ensemble {
            let out = member.forward(features)?;
            mean += &softmax_rows(&out.logits.view());
        }
        mean.mapv_inplace(|v| v / self.suite.ensemble.len() as f64);
        Ok(mean)
    }

    /// Raw signal bundle for audit export.
    pub fn extract_bundle(&self, features: &ArrayView2<f64>) -> Result<SignalBundle> {
        self.suite.extract_bundle(features)
    }
}

