//! Signal identifiers, per-dataset signal bundles, and batch extraction from
//! a fitted suite of models.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Backbone;
use crate::signals::causal::CausalModel;
use crate::signals::mahalanobis::MahalanobisModel;
use crate::signals::scores::{energy_score, entropy_and_mi, gauss_score, odin_score};
use crate::signals::usd::UsdClassifier;

/// The named signals, in canonical order (also the tie-breaking order for
/// calibration ranking).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SignalId {
    Gauss,
    FtMahaP,
    InMaha,
    Energy,
    Entropy,
    Mi,
    Odin,
    Usd,
    Causal,
}

impl SignalId {
    pub const CANONICAL: [SignalId; 9] = [
        SignalId::Gauss,
        SignalId::FtMahaP,
        SignalId::InMaha,
        SignalId::Energy,
        SignalId::Entropy,
        SignalId::Mi,
        SignalId::Odin,
        SignalId::Usd,
        SignalId::Causal,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SignalId::Gauss => "Gauss",
            SignalId::FtMahaP => "FtMahaP",
            SignalId::InMaha => "InMaha",
            SignalId::Energy => "Energy",
            SignalId::Entropy => "Entropy",
            SignalId::Mi => "MI",
            SignalId::Odin => "ODIN",
            SignalId::Usd => "USD",
            SignalId::Causal => "Causal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::CANONICAL.iter().copied().find(|id| id.name() == s)
    }
}

/// One raw value per signal per row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignalBundle {
    pub signals: Vec<SignalId>,
    /// `n_rows x signals.len()`, columns aligned with `signals`.
    pub values: Array2<f64>,
}

impl SignalBundle {
    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn column(&self, id: SignalId) -> Option<ArrayView1<'_, f64>> {
        let idx = self.signals.iter().position(|s| *s == id)?;
        Some(self.values.column(idx))
    }

    /// Copy of the bundle without one signal (ablation support).
    pub fn without(&self, id: SignalId) -> SignalBundle {
        let keep: Vec<usize> = self
            .signals
            .iter()
            .enumerate()
            .filter(|(_, s)| **s != id)
            .map(|(i, _)| i)
            .collect();
        let signals: Vec<SignalId> = keep.iter().map(|&i| self.signals[i]).collect();
        let mut values = Array2::<f64>::zeros((self.n_rows(), keep.len()));
        for (new_col, &old_col) in keep.iter().enumerate() {
            values
                .column_mut(new_col)
                .assign(&self.values.column(old_col));
        }
        SignalBundle { signals, values }
    }

    /// Restriction to a single signal.
    pub fn only(&self, id: SignalId) -> Option<SignalBundle> {
        let idx = self.signals.iter().position(|s| *s == id)?;
        let mut values = Array2::<f64>::zeros((self.n_rows(), 1));
        values.column_mut(0).assign(&self.values.column(idx));
        Some(SignalBundle {
            signals: vec![id],
            values,
        })
    }

    /// Audit export: one column per signal.
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        let header: Vec<&str> = self.signals.iter().map(|s| s.name()).collect();
        writer.write_record(&header)?;
        for row in self.values.rows() {
            let record: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn from_csv(path: &Path) -> Result<SignalBundle> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        let signals: Vec<SignalId> = reader
            .headers()?
            .iter()
            .map(|h| {
                SignalId::parse(h).ok_or_else(|| Error::Parse {
                    path: path.display().to_string(),
                    row: 1,
                    message: format!("unknown signal column '{h}'"),
                })
            })
            .collect::<Result<_>>()?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (row_no, record) in reader.records().enumerate() {
            let record = record?;
            let row: Vec<f64> = record
                .iter()
                .map(|cell| {
                    cell.trim().parse::<f64>().map_err(|_| Error::Parse {
                        path: path.display().to_string(),
                        row: row_no + 2,
                        message: format!("non-numeric cell '{cell}'"),
                    })
                })
                .collect::<Result<_>>()?;
            rows.push(row);
        }
        let mut values = Array2::<f64>::zeros((rows.len(), signals.len()));
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                values[[i, j]] = *v;
            }
        }
        Ok(SignalBundle { signals, values })
    }
}

/// Every fitted model needed to turn raw feature rows into a signal bundle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignalSuite {
    /// Spectral-normalized encoder ensemble.
    pub ensemble: Vec<Backbone>,
    /// Geometry-preserving twin for feature-space distances.
    pub plain: Backbone,
    /// Mahalanobis in the plain penultimate feature space.
    pub feature_maha: MahalanobisModel,
    /// Mahalanobis directly on the (standardized) inputs.
    pub input_maha: MahalanobisModel,
    pub usd: UsdClassifier,
    /// Present only when the feature width is at most 30.
    pub causal: Option<CausalModel>,
    pub odin_temperature: f64,
    pub odin_epsilon: f64,
}

impl SignalSuite {
    /// The signals this suite produces, in canonical order.
    pub fn signal_ids(&self) -> Vec<SignalId> {
        let mut ids: Vec<SignalId> = SignalId::CANONICAL
            .iter()
            .copied()
            .filter(|id| *id != SignalId::Causal)
            .collect();
        if self.causal.is_some() {
            ids.push(SignalId::Causal);
        }
        ids
    }

    /// Computes one raw value per signal per row. Any non-finite value is
    /// refused with the signal name and row index.
    pub fn extract_bundle(&self, features: &ArrayView2<f64>) -> Result<SignalBundle> {
        let n = features.nrows();
        let ids = self.signal_ids();
        let mut values = Array2::<f64>::zeros((n, ids.len()));

        // Ensemble forward passes, batched per member.
        let member_outputs: Vec<_> = self
            .ensemble
            .iter()
            .map(|m| m.forward(features))
            .collect::<Result<_>>()?;
        let plain_out = self.plain.forward(features)?;

        for (col, id) in ids.iter().enumerate() {
            let column: Vec<f64> = match id {
                SignalId::Gauss => (0..n)
                    .map(|i| {
                        let rows: Vec<ArrayView1<f64>> = member_outputs
                            .iter()
                            .map(|o| o.penultimate.row(i))
                            .collect();
                        gauss_score(&rows)
                    })
                    .collect(),
                SignalId::FtMahaP => self
                    .feature_maha
                    .scores_batch(&plain_out.penultimate.view()),
                SignalId::InMaha => self.input_maha.scores_batch(features),
                SignalId::Energy => {
                    let m = member_outputs.len() as f64;
                    (0..n)
                        .map(|i| {
                            let mut mean = member_outputs[0].logits.row(i).to_owned();
                            for o in &member_outputs[1..] {
                                mean += &o.logits.row(i);
                            }
                            mean.mapv_inplace(|v| v / m);
                            energy_score(&mean.view())
                        })
                        .collect()
                }
                SignalId::Entropy | SignalId::Mi => (0..n)
                    .map(|i| {
                        let rows: Vec<ArrayView1<f64>> =
                            member_outputs.iter().map(|o| o.logits.row(i)).collect();
                        let (entropy, mi) = entropy_and_mi(&rows);
                        if *id == SignalId::Entropy {
                            entropy
                        } else {
                            mi
                        }
                    })
                    .collect(),
                SignalId::Odin => {
                    let mut out = Vec::with_capacity(n);
                    for i in 0..n {
                        out.push(odin_score(
                            &self.ensemble,
                            &features.row(i),
                            self.odin_temperature,
                            self.odin_epsilon,
                        )?);
                    }
                    out
                }
                SignalId::Usd => self.usd.scores_batch(features)?,
                SignalId::Causal => self
                    .causal
                    .as_ref()
                    .expect("gated by signal_ids")
                    .scores_batch(features)?,
            };
            for (row, v) in column.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFiniteSignal {
                        signal: id.name().to_string(),
                        row,
                    });
                }
                values[[row, col]] = *v;
            }
        }
        Ok(SignalBundle {
            signals: ids,
            values,
        })
    }
}
