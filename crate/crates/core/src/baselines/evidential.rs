//! Evidential classifier: Dirichlet concentrations from softplus evidence,
//! scored by vacuity.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::Result;
use crate::nn::loss::evidential_alpha;
use crate::nn::{
    train_with_loss, ArchDescriptor, Backbone, OptimizerConfig, TargetBuffer, TrainLoss,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvidentialDetector {
    pub model: Backbone,
}

pub fn fit_evidential(data: &LabeledDataset, seed: u64) -> Result<EvidentialDetector> {
    let arch = ArchDescriptor::baseline(data.n_features(), data.n_classes());
    let (x_train, y_train) = data.train_rows();
    let (x_val, y_val) = data.val_rows();
    let opt = OptimizerConfig::baseline(seed);
    let outcome = train_with_loss(
        &x_train.view(),
        &TargetBuffer::Classes(y_train),
        &x_val.view(),
        &TargetBuffer::Classes(y_val),
        &arch,
        TrainLoss::Evidential { anneal_epochs: 10 },
        &opt,
    )
    .map_err(|e| e.in_component("evidential"))?;
    Ok(EvidentialDetector {
        model: outcome.model,
    })
}

impl EvidentialDetector {
    fn alphas(&self, features: &ArrayView2<f64>) -> Result<Array2<f64>> {
        let out = self.model.forward(features)?;
        Ok(evidential_alpha(&out.logits.view()))
    }

    /// Vacuity `C / sum(alpha)`: 1 at zero evidence, smaller as evidence
    /// accumulates.
    pub fn score(&self, features: &ArrayView2<f64>) -> Result<Vec<f64>> {
        let alphas = self.alphas(features)?;
        let c = alphas.ncols() as f64;
        Ok(alphas.rows().into_iter().map(|row| c / row.sum()).collect())
    }

    /// Predictive probabilities `alpha / sum(alpha)`.
    pub fn class_probabilities(&self, features: &ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut alphas = self.alphas(features)?;
        for mut row in alphas.rows_mut() {
            let s = row.sum();
            row.mapv_inplace(|a| a / s);
        }
        Ok(alphas)
    }
}
