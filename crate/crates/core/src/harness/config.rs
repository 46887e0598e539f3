//! Flat key-value experiment configuration.
//!
//! Format: one `key = value` per line, `#` starts a comment, list values are
//! comma-separated. Example:
//!
//! ```text
//! datasets = synthetic, gridworld
//! detectors = spectre, mahalanobis, deep_ensembles
//! seeds = 42, 43, 44, 45, 46
//! out = results
//! # dataset file inputs
//! adult_csv = data/adult.data
//! feature_tables = planted:fixtures/planted
//! noise_convention = variance
//! train_size = 10000
//! test_size = 2000
//! ```

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::baselines::BaselineKind;
use crate::data::NoiseConvention;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSelector {
    Synthetic,
    Gridworld,
    Adult,
    /// Named directory of feature-table files (`train.*`, `test_regular.*`,
    /// `test_<variant>.*`).
    FeatureTable(String),
}

impl DatasetSelector {
    pub fn name(&self) -> String {
        match self {
            DatasetSelector::Synthetic => "synthetic".to_string(),
            DatasetSelector::Gridworld => "gridworld".to_string(),
            DatasetSelector::Adult => "adult".to_string(),
            DatasetSelector::FeatureTable(name) => format!("table:{name}"),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "synthetic" => Some(DatasetSelector::Synthetic),
            "gridworld" => Some(DatasetSelector::Gridworld),
            "adult" => Some(DatasetSelector::Adult),
            other => other
                .strip_prefix("table:")
                .map(|name| DatasetSelector::FeatureTable(name.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Spectre,
    Baseline(BaselineKind),
}

impl DetectorKind {
    pub fn name(&self) -> &'static str {
        match self {
            DetectorKind::Spectre => "spectre",
            DetectorKind::Baseline(kind) => kind.name(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        if s == "spectre" {
            return Some(DetectorKind::Spectre);
        }
        BaselineKind::parse(s).map(DetectorKind::Baseline)
    }

    /// The detector set of the main evaluation protocol: the multi-signal
    /// detector plus all twelve baselines.
    pub fn all() -> Vec<DetectorKind> {
        let mut out = vec![DetectorKind::Spectre];
        out.extend(BaselineKind::ALL.iter().map(|k| DetectorKind::Baseline(*k)));
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub datasets: Vec<DatasetSelector>,
    pub detectors: Vec<DetectorKind>,
    /// Restrict anomaly variants (names per dataset family); `None` runs all
    /// variants valid for each dataset.
    pub variants: Option<Vec<String>>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub adult_csv: Option<PathBuf>,
    /// Named feature-table directories.
    pub feature_tables: BTreeMap<String, PathBuf>,
    pub noise_convention: NoiseConvention,
    pub train_size: Option<usize>,
    pub test_size: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            datasets: vec![DatasetSelector::Synthetic],
            detectors: DetectorKind::all(),
            variants: None,
            seeds: vec![42, 43, 44, 45, 46],
            out_dir: PathBuf::from("results"),
            adult_csv: None,
            feature_tables: BTreeMap::new(),
            noise_convention: NoiseConvention::StdDev,
            train_size: None,
            test_size: None,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = ExperimentConfig::default();
        for (line_no, raw_line) in text.lines().enumerate() {
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::invalid(format!("config line {}: expected key = value", line_no + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let list = || -> Vec<&str> {
                value
                    .split(',')
                    .map(|v| v.trim())
                    .filter(|v| !v.is_empty())
                    .collect()
            };
            match key {
                "datasets" | "dataset" => {
                    config.datasets = list()
                        .into_iter()
                        .map(|v| {
                            DatasetSelector::parse(v).ok_or_else(|| {
                                Error::invalid(format!("unknown dataset '{v}'"))
                            })
                        })
                        .collect::<Result<_>>()?;
                }
                "detectors" | "detector" => {
                    let items = list();
                    if items == ["all"] {
                        config.detectors = DetectorKind::all();
                    } else {
                        config.detectors = items
                            .into_iter()
                            .map(|v| {
                                DetectorKind::parse(v).ok_or_else(|| {
                                    Error::invalid(format!("unknown detector '{v}'"))
                                })
                            })
                            .collect::<Result<_>>()?;
                    }
                }
                "variants" | "variant" => {
                    config.variants = Some(list().into_iter().map(|v| v.to_string()).collect());
                }
                "seeds" | "seed" => {
                    config.seeds = list()
                        .into_iter()
                        .map(|v| {
                            v.parse::<u64>()
                                .map_err(|_| Error::invalid(format!("bad seed '{v}'")))
                        })
                        .collect::<Result<_>>()?;
                }
                "out" | "out_dir" => config.out_dir = PathBuf::from(value),
                "adult_csv" => config.adult_csv = Some(PathBuf::from(value)),
                "feature_tables" | "feature_table" => {
                    for item in list() {
                        let (name, path) = item.split_once(':').ok_or_else(|| {
                            Error::invalid(format!(
                                "feature table '{item}' must be name:path"
                            ))
                        })?;
                        config
                            .feature_tables
                            .insert(name.trim().to_string(), PathBuf::from(path.trim()));
                    }
                }
                "noise_convention" => {
                    config.noise_convention =
                        NoiseConvention::parse(value).ok_or_else(|| {
                            Error::invalid(format!("unknown noise convention '{value}'"))
                        })?;
                }
                "train_size" => {
                    config.train_size = Some(value.parse().map_err(|_| {
                        Error::invalid(format!("bad train_size '{value}'"))
                    })?);
                }
                "test_size" => {
                    config.test_size = Some(value.parse().map_err(|_| {
                        Error::invalid(format!("bad test_size '{value}'"))
                    })?);
                }
                other => {
                    return Err(Error::invalid(format!(
                        "unknown config key '{other}' at line {}",
                        line_no + 1
                    )));
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::invalid("seeds must be non-empty"));
        }
        if self.datasets.is_empty() {
            return Err(Error::invalid("datasets must be non-empty"));
        }
        if self.detectors.is_empty() {
            return Err(Error::invalid("detectors must be non-empty"));
        }
        if let Some(variants) = &self.variants {
            for dataset in &self.datasets {
                for v in variants {
                    if !variant_valid(dataset, v) {
                        return Err(Error::invalid(format!(
                            "variant '{v}' is not valid for dataset '{}'",
                            dataset.name()
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Whether a named anomaly variant exists for a dataset family. Feature
/// tables accept any name (their variants are whatever test files exist).
pub fn variant_valid(dataset: &DatasetSelector, variant: &str) -> bool {
    use crate::data::{AdultVariant, GridworldVariant, SyntheticVariant};
    match dataset {
        DatasetSelector::Synthetic => SyntheticVariant::parse(variant)
            .map(|v| v != SyntheticVariant::Regular)
            .unwrap_or(false),
        DatasetSelector::Gridworld => GridworldVariant::parse(variant)
            .map(|v| v != GridworldVariant::Regular)
            .unwrap_or(false),
        DatasetSelector::Adult => AdultVariant::parse(variant)
            .map(|v| v != AdultVariant::Regular)
            .unwrap_or(false),
        DatasetSelector::FeatureTable(_) => true,
    }
}
