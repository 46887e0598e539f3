//! Configuration-driven experiment runner: dataset preparation, the
//! multi-seed evaluation sweep, the 14-variant ablation, and report
//! rendering.

pub mod config;
pub mod report;
pub mod runner;

pub use config::{DatasetSelector, DetectorKind, ExperimentConfig};
pub use report::{render_ablation, render_report, write_summary, SummaryMetric};
pub use runner::{
    build_family, detector_seed, read_records, run_ablation, run_experiment, write_records,
    AblationOutcome, AblationRow, AblationVariant, AccessEvent, DatasetFamily, FailedCell,
    FittedDetector, RunManifest, RunOutcome,
};
