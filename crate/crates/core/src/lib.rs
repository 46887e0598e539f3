//! Multi-signal anomaly detection toolkit.
//!
//! The crate provides, from the bottom up:
//!
//! - [`nn`]: a minimal dense-network engine (forward/backward, spectral
//!   normalization, batch norm, AdamW with cosine annealing, early stopping);
//! - [`data`]: dataset generators with injected structural anomalies,
//!   tabular ingestion, feature-table formats, standardization, splitting;
//! - [`signals`]: the raw anomaly signals extracted from trained backbones;
//! - [`spectre`]: the multi-signal detector (pseudo-OOD calibration,
//!   percentile normalization, direction correction, adaptive top-k fusion);
//! - [`baselines`]: twelve reference detectors behind one fit/score surface;
//! - [`metrics`]: AUROC / AUPR / FPR95 / confident-error-rate;
//! - [`harness`]: the configuration-driven experiment and ablation runner.

pub mod baselines;
pub mod data;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod seeding;
pub mod signals;
pub mod spectre;

pub use error::{Error, Result};

/// Serializes any model or state to pretty JSON on disk. JSON floats use the
/// shortest round-trip representation, so reloads are bit-exact.
pub fn save_json<T: serde::Serialize>(value: &T, path: &std::path::Path) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(file, value)?;
    Ok(())
}

/// Counterpart of [`save_json`].
pub fn load_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    Ok(serde_json::from_reader(file)?)
}
