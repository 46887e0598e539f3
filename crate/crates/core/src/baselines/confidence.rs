//! Confidence-driven baselines: independent ensembles, Monte Carlo dropout
//! (with or without the entropy bonus), and perturbed temperature-scaled
//! confidence.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::MC_SAMPLES;
use crate::data::LabeledDataset;
use crate::error::Result;
use crate::nn::loss::softmax_rows;
use crate::nn::{
    train_classifier, train_with_loss, ArchDescriptor, Backbone, OptimizerConfig, TargetBuffer,
    TrainLoss,
};
use crate::seeding::rng_from_seed;
use crate::signals::odin_score;

fn max_per_row(probs: &Array2<f64>) -> Vec<f64> {
    probs
        .rows()
        .into_iter()
        .map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

/// Five independently initialized classifiers; the anomaly score is the
/// negative maximum of the averaged softmax.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleDetector {
    pub members: Vec<Backbone>,
}

pub fn fit_deep_ensembles(data: &LabeledDataset, seed: u64) -> Result<EnsembleDetector> {
    let arch = ArchDescriptor::baseline(data.n_features(), data.n_classes());
    let members: Vec<Backbone> = (0..5)
        .into_par_iter()
        .map(|m| {
            let opt = OptimizerConfig::baseline(seed + m as u64);
            train_classifier(data, &arch, 0.0, &opt)
                .map(|o| o.model)
                .map_err(|e| e.in_component(&format!("ensemble member {m}")))
        })
        .collect::<Result<_>>()?;
    Ok(EnsembleDetector { members })
}

impl EnsembleDetector {
    pub fn class_probabilities(&self, features: &ArrayView2<f64>) -> Result<Array2<f64>> {
        let n = features.nrows();
        let c = self.members[0].n_classes();
        let mut mean = Array2::<f64>::zeros((n, c));
        for member in &self.members {
            let out = member.forward(features)?;
            mean += &softmax_rows(&out.logits.view());
        }
        mean.mapv_inplace(|v| v / self.members.len() as f64);
        Ok(mean)
    }

    pub fn score(&self, features: &ArrayView2<f64>) -> Result<Vec<f64>> {
        let probs = self.class_probabilities(features)?;
        Ok(max_per_row(&probs).into_iter().map(|m| -m).collect())
    }
}

/// One dropout-regularized classifier sampled stochastically at test time.
/// Also used by the entropy-regularized variant (the only difference is the
/// training loss).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McDropoutDetector {
    pub model: Backbone,
    pub mc_samples: usize,
}

fn fit_mc_family(data: &LabeledDataset, seed: u64, loss: TrainLoss) -> Result<McDropoutDetector> {
    let arch = ArchDescriptor::baseline(data.n_features(), data.n_classes()).with_dropout(0.3);
    let (x_train, y_train) = data.train_rows();
    let (x_val, y_val) = data.val_rows();
    let opt = OptimizerConfig::baseline(seed);
    let outcome = train_with_loss(
        &x_train.view(),
        &TargetBuffer::Classes(y_train),
        &x_val.view(),
        &TargetBuffer::Classes(y_val),
        &arch,
        loss,
        &opt,
    )?;
    Ok(McDropoutDetector {
        model: outcome.model,
        mc_samples: MC_SAMPLES,
    })
}

pub fn fit_mc_dropout(data: &LabeledDataset, seed: u64) -> Result<McDropoutDetector> {
    fit_mc_family(data, seed, TrainLoss::CrossEntropy { gauss_lambda: 0.0 })
        .map_err(|e| e.in_component("mc dropout"))
}

/// Entropy-regularized variant: cross-entropy minus 0.1 times the batch mean
/// softmax entropy.
pub fn fit_benn(data: &LabeledDataset, seed: u64) -> Result<McDropoutDetector> {
    fit_mc_family(data, seed, TrainLoss::EntropyPenalized { coefficient: 0.1 })
        .map_err(|e| e.in_component("entropy-regularized dropout"))
}

impl McDropoutDetector {
    /// Mean softmax over `mc_samples` stochastic passes, deterministic per
    /// `mc_seed`.
    pub fn class_probabilities(
        &self,
        features: &ArrayView2<f64>,
        mc_seed: u64,
    ) -> Result<Array2<f64>> {
        let n = features.nrows();
        let c = self.model.n_classes();
        let mut rng = rng_from_seed(mc_seed);
        let mut mean = Array2::<f64>::zeros((n, c));
        for _ in 0..self.mc_samples {
            let out = self.model.forward_mc(features, &mut rng)?;
            mean += &softmax_rows(&out.logits.view());
        }
        mean.mapv_inplace(|v| v / self.mc_samples as f64);
        Ok(mean)
    }

    pub fn score(&self, features: &ArrayView2<f64>, mc_seed: u64) -> Result<Vec<f64>> {
        let probs = self.class_probabilities(features, mc_seed)?;
        Ok(max_per_row(&probs).into_iter().map(|m| -m).collect())
    }
}

/// Single classifier scored by negative perturbed temperature-scaled
/// confidence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OdinDetector {
    pub model: Backbone,
    pub temperature: f64,
    pub epsilon: f64,
}

pub fn fit_odin(data: &LabeledDataset, seed: u64) -> Result<OdinDetector> {
    let arch = ArchDescriptor::baseline(data.n_features(), data.n_classes());
    let opt = OptimizerConfig::baseline(seed);
    let outcome =
        train_classifier(data, &arch, 0.0, &opt).map_err(|e| e.in_component("odin"))?;
    Ok(OdinDetector {
        model: outcome.model,
        temperature: 1000.0,
        epsilon: 0.002,
    })
}

impl OdinDetector {
    pub fn score(&self, features: &ArrayView2<f64>) -> Result<Vec<f64>> {
        let ensemble = std::slice::from_ref(&self.model);
        let mut scores = Vec::with_capacity(features.nrows());
        for row in features.rows() {
            let confidence = odin_score(ensemble, &row, self.temperature, self.epsilon)?;
            scores.push(-confidence);
        }
        Ok(scores)
    }

    /// Unperturbed softmax at temperature 1.
    pub fn class_probabilities(&self, features: &ArrayView2<f64>) -> Result<Array2<f64>> {
        let out = self.model.forward(features)?;
        Ok(softmax_rows(&out.logits.view()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::testutil::blob_data;

    #[test]
    fn deep_ensembles_has_exactly_five_members() {
        let data = blob_data(400, 1);
        let det = fit_deep_ensembles(&data, 2).unwrap();
        assert_eq!(det.members.len(), 5);
        let scores = det.score(&data.features.view()).unwrap();
        // Scores live in [-1, -1/C].
        assert!(scores.iter().all(|s| (-1.0..=-0.5).contains(s)), "range");
    }

    #[test]
    fn mc_dropout_is_deterministic_per_mc_seed() {
        let data = blob_data(400, 3);
        let det = fit_mc_dropout(&data, 4).unwrap();
        let a = det.score(&data.features.view(), 77).unwrap();
        let b = det.score(&data.features.view(), 77).unwrap();
        let c = det.score(&data.features.view(), 78).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|s| (-1.0..=-0.5).contains(s)));
    }

    #[test]
    fn benn_trains_and_scores_in_range() {
        let data = blob_data(400, 5);
        let det = fit_benn(&data, 6).unwrap();
        let scores = det.score(&data.features.view(), 1).unwrap();
        assert!(scores.iter().all(|s| (-1.0..=-0.5).contains(s)));
    }

    #[test]
    fn odin_scores_are_negative_confidences() {
        let data = blob_data(400, 7);
        let det = fit_odin(&data, 8).unwrap();
        let scores = det.score(&data.features.view()).unwrap();
        assert!(scores.iter().all(|s| (-1.0..=-0.5).contains(s)));
    }
}
