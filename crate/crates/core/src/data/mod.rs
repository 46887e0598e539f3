//! Dataset generation, ingestion, standardization, and splitting.

pub mod adult;
pub mod dataset;
pub mod gridworld;
pub mod synthetic;
pub mod table;

pub use adult::{inject_adult_anomaly, load_adult_csv, write_adult_fixture_csv, AdultVariant};
pub use dataset::{
    split, standardize_apply, standardize_fit, standardize_fit_matrix, DatasetMeta,
    GeneratorManifest, LabeledDataset, SplitTag, Standardizer,
};
pub use gridworld::{gen_gridworld, GridworldVariant};
pub use synthetic::{gen_synthetic, gen_synthetic_with, NoiseConvention, SyntheticVariant};
pub use table::{load_feature_table, write_csv, write_raw, TableFormat};
