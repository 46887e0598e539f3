//! Experiment and ablation runners.
//!
//! A run walks (dataset, seed, detector) cells: each (dataset, seed) builds
//! a standardized family (train/val pool plus regular and anomaly test
//! sets), each detector fits on the train/val splits only, and every anomaly
//! test set is scored against the regular test set (regular labeled 0,
//! anomaly labeled 1). Failed cells are recorded and never abort the sweep.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use crate::baselines::{baseline_fit, BaselineDetector};
use crate::data::{
    gen_gridworld, gen_synthetic_with, inject_adult_anomaly, load_adult_csv, load_feature_table,
    split, standardize_fit, AdultVariant, GridworldVariant, LabeledDataset, SplitTag,
    Standardizer, SyntheticVariant, TableFormat,
};
use crate::error::{Error, Result};
use crate::harness::config::{DatasetSelector, DetectorKind, ExperimentConfig};
use crate::metrics::{aupr, auroc, conf_err, fpr95, EvalRecord};
use crate::seeding::derive_seed;
use crate::signals::{SignalBundle, SignalId};
use crate::spectre::{
    build_suite, calibrate, fit_shared_components, gen_pseudo_ood, spectre_fit,
    train_gauss_ensemble, SpectreConfig, SpectreDetector,
};

/// One anomaly test set: variant name, standardized features, class labels.
#[derive(Debug, Clone)]
pub struct TestSet {
    pub variant: String,
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

/// A fully prepared (dataset, seed) family.
#[derive(Debug, Clone)]
pub struct DatasetFamily {
    pub name: String,
    pub seed: u64,
    /// Standardized pool with train/val tags.
    pub train: LabeledDataset,
    pub standardizer: Standardizer,
    pub regular: TestSet,
    pub anomalies: Vec<TestSet>,
}

/// Entry of the file/data access trace kept for audit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccessEvent {
    pub phase: String,
    pub dataset: String,
    pub role: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailedCell {
    pub detector: String,
    pub dataset: String,
    pub variant: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub datasets: Vec<String>,
    pub detectors: Vec<String>,
    pub seeds: Vec<u64>,
    pub noise_convention: String,
    pub score_orientation: String,
    pub seed_derivation: String,
    pub conf_err_source: String,
    pub failures: Vec<FailedCell>,
    pub access_log: Vec<AccessEvent>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records: Vec<EvalRecord>,
    pub failures: Vec<FailedCell>,
    pub manifest: RunManifest,
}

fn default_sizes(selector: &DatasetSelector) -> (usize, usize) {
    match selector {
        DatasetSelector::Synthetic => (10_000, 2_000),
        DatasetSelector::Gridworld => (5_000, 1_000),
        DatasetSelector::Adult => (0, 2_000), // train size comes from the file
        DatasetSelector::FeatureTable(_) => (0, 0), // file-defined
    }
}

fn wanted(config: &ExperimentConfig, variant: &str) -> bool {
    config
        .variants
        .as_ref()
        .map(|list| list.iter().any(|v| v == variant))
        .unwrap_or(true)
}

/// Builds the standardized family for one (dataset, seed): generate or load
/// raw data, inject anomalies (raw units), split the pool, fit the
/// standardizer on train rows only, and transform every set with it.
pub fn build_family(
    selector: &DatasetSelector,
    seed: u64,
    config: &ExperimentConfig,
) -> Result<DatasetFamily> {
    let name = selector.name();
    let (default_train, default_test) = default_sizes(selector);
    let train_size = config.train_size.unwrap_or(default_train);
    let test_size = config.test_size.unwrap_or(default_test);

    let (mut pool, raw_tests): (LabeledDataset, Vec<(String, LabeledDataset)>) = match selector {
        DatasetSelector::Synthetic => {
            let convention = config.noise_convention;
            let mut pool = gen_synthetic_with(
                train_size,
                SyntheticVariant::Regular,
                convention,
                derive_seed(seed, &[&name, "train"]),
            );
            pool.split = vec![SplitTag::Train; pool.n_rows()];
            let mut tests = vec![(
                "regular".to_string(),
                gen_synthetic_with(
                    test_size,
                    SyntheticVariant::Regular,
                    convention,
                    derive_seed(seed, &[&name, "test", "regular"]),
                ),
            )];
            for variant in SyntheticVariant::ALL {
                if variant == SyntheticVariant::Regular || !wanted(config, variant.name()) {
                    continue;
                }
                tests.push((
                    variant.name().to_string(),
                    gen_synthetic_with(
                        test_size,
                        variant,
                        convention,
                        derive_seed(seed, &[&name, "test", variant.name()]),
                    ),
                ));
            }
            (pool, tests)
        }
        DatasetSelector::Gridworld => {
            let mut pool = gen_gridworld(
                train_size,
                GridworldVariant::Regular,
                derive_seed(seed, &[&name, "train"]),
            );
            pool.split = vec![SplitTag::Train; pool.n_rows()];
            let mut tests = vec![(
                "regular".to_string(),
                gen_gridworld(
                    test_size,
                    GridworldVariant::Regular,
                    derive_seed(seed, &[&name, "test", "regular"]),
                ),
            )];
            for variant in GridworldVariant::ALL {
                if variant == GridworldVariant::Regular || !wanted(config, variant.name()) {
                    continue;
                }
                tests.push((
                    variant.name().to_string(),
                    gen_gridworld(
                        test_size,
                        variant,
                        derive_seed(seed, &[&name, "test", variant.name()]),
                    ),
                ));
            }
            (pool, tests)
        }
        DatasetSelector::Adult => {
            let path = config
                .adult_csv
                .as_ref()
                .ok_or_else(|| Error::invalid("adult dataset selected but adult_csv not set"))?;
            let raw = load_adult_csv(path)?;
            let n = raw.n_rows();
            if n < 50 {
                return Err(Error::invalid("adult file has too few usable rows"));
            }
            let mut order: Vec<usize> = (0..n).collect();
            {
                use rand::seq::SliceRandom;
                let mut rng =
                    crate::seeding::rng_from_seed(derive_seed(seed, &[&name, "partition"]));
                order.shuffle(&mut rng);
            }
            let n_pool = (n * 4) / 5;
            let take = |idx: &[usize]| -> LabeledDataset {
                let mut features = Array2::<f64>::zeros((idx.len(), raw.n_features()));
                let mut labels = Vec::with_capacity(idx.len());
                for (row, &i) in idx.iter().enumerate() {
                    features.row_mut(row).assign(&raw.features.row(i));
                    labels.push(raw.labels[i]);
                }
                let mut data = raw.clone();
                data.features = features;
                data.labels = labels;
                data.split = vec![SplitTag::Train; idx.len()];
                data
            };
            let pool = take(&order[..n_pool]);
            let holdout_idx = &order[n_pool..];
            let test_n = test_size.min(holdout_idx.len()).max(1);

            let regular_base = take(&holdout_idx[..test_n]);
            let mut tests = vec![("regular".to_string(), regular_base)];
            for variant in AdultVariant::ALL {
                if variant == AdultVariant::Regular || !wanted(config, variant.name()) {
                    continue;
                }
                // Fresh seeded sample (with replacement) from the holdout.
                let mut rng = crate::seeding::rng_from_seed(derive_seed(
                    seed,
                    &[&name, "base", variant.name()],
                ));
                use rand::Rng as _;
                let sample: Vec<usize> = (0..test_n)
                    .map(|_| holdout_idx[rng.random_range(0..holdout_idx.len())])
                    .collect();
                let base = take(&sample);
                let injected = inject_adult_anomaly(
                    &base,
                    variant,
                    derive_seed(seed, &[&name, "inject", variant.name()]),
                )?;
                tests.push((variant.name().to_string(), injected));
            }
            (pool, tests)
        }
        DatasetSelector::FeatureTable(table_name) => {
            let dir = config.feature_tables.get(table_name).ok_or_else(|| {
                Error::invalid(format!("feature table '{table_name}' has no configured path"))
            })?;
            let load = |stem: &str| -> Result<Option<LabeledDataset>> {
                let csv = dir.join(format!("{stem}.csv"));
                let bin = dir.join(format!("{stem}.bin"));
                if csv.exists() {
                    Ok(Some(load_feature_table(&csv, TableFormat::Csv)?))
                } else if bin.exists() {
                    Ok(Some(load_feature_table(&bin, TableFormat::RawFloat)?))
                } else {
                    Ok(None)
                }
            };
            let mut pool = load("train")?.ok_or_else(|| {
                Error::invalid(format!("no train.csv or train.bin under {}", dir.display()))
            })?;
            if !pool.split.iter().any(|t| *t == SplitTag::Train) {
                pool.split = vec![SplitTag::Train; pool.n_rows()];
            }
            let regular = load("test_regular")?.ok_or_else(|| {
                Error::invalid(format!("no test_regular.* under {}", dir.display()))
            })?;
            let mut tests = vec![("regular".to_string(), regular)];
            let mut names: Vec<String> = std::fs::read_dir(dir)?
                .filter_map(|entry| entry.ok())
                .filter_map(|entry| {
                    let file = entry.file_name().to_string_lossy().to_string();
                    let stem = file.strip_suffix(".csv").or(file.strip_suffix(".bin"))?;
                    let variant = stem.strip_prefix("test_")?;
                    if variant == "regular" {
                        None
                    } else {
                        Some(variant.to_string())
                    }
                })
                .collect();
            names.sort();
            names.dedup();
            for variant in names {
                if !wanted(config, &variant) {
                    continue;
                }
                let data = load(&format!("test_{variant}"))?.expect("listed file exists");
                tests.push((variant, data));
            }
            (pool, tests)
        }
    };

    // Train/val split on the pool, then standardization fitted on the train
    // rows only and applied verbatim everywhere.
    if !pool.split.iter().any(|t| *t == SplitTag::Val) {
        split(&mut pool, 0.8, derive_seed(seed, &[&name, "split"]))?;
    }
    let standardizer = standardize_fit(&pool)?;
    crate::data::standardize_apply(&standardizer, &mut pool)?;

    let mut regular = None;
    let mut anomalies = Vec::new();
    for (variant, raw) in raw_tests {
        let features = standardizer.transform(&raw.features.view());
        let set = TestSet {
            variant: variant.clone(),
            features,
            labels: raw.labels,
        };
        if variant == "regular" {
            regular = Some(set);
        } else {
            anomalies.push(set);
        }
    }

    Ok(DatasetFamily {
        name,
        seed,
        train: pool,
        standardizer,
        regular: regular.ok_or_else(|| Error::invalid("family lacks a regular test set"))?,
        anomalies,
    })
}

/// A fitted detector of either kind.
pub enum FittedDetector {
    Spectre(Box<SpectreDetector>),
    Baseline(BaselineDetector),
}

impl FittedDetector {
    pub fn score(&self, features: &ArrayView2<f64>, mc_seed: u64) -> Result<Vec<f64>> {
        match self {
            FittedDetector::Spectre(d) => d.score(features),
            FittedDetector::Baseline(d) => d.score(features, mc_seed),
        }
    }

    pub fn class_probabilities(
        &self,
        features: &ArrayView2<f64>,
        mc_seed: u64,
    ) -> Result<Option<Array2<f64>>> {
        match self {
            FittedDetector::Spectre(d) => d.class_probabilities(features).map(Some),
            FittedDetector::Baseline(d) => d.class_probabilities(features, mc_seed),
        }
    }
}

/// Fits one detector on a family's train/val splits.
pub fn fit_detector(
    kind: DetectorKind,
    family: &DatasetFamily,
    detector_seed: u64,
) -> Result<FittedDetector> {
    match kind {
        DetectorKind::Spectre => {
            let config = SpectreConfig::default();
            let detector = spectre_fit(&family.train, &family.standardizer, &config, detector_seed)?;
            Ok(FittedDetector::Spectre(Box::new(detector)))
        }
        DetectorKind::Baseline(kind) => Ok(FittedDetector::Baseline(baseline_fit(
            kind,
            &family.train,
            detector_seed,
        )?)),
    }
}

/// The stated seed-mixing rule binding a detector to its (dataset, seed)
/// cell.
pub fn detector_seed(config_seed: u64, dataset: &str, detector: &str) -> u64 {
    derive_seed(config_seed, &[dataset, detector])
}

struct CellOutput {
    records: Vec<EvalRecord>,
    failures: Vec<FailedCell>,
    access: Vec<AccessEvent>,
}

fn evaluate_detector_on_family(
    kind: DetectorKind,
    family: &DatasetFamily,
    config_seed: u64,
) -> CellOutput {
    let mut out = CellOutput {
        records: Vec::new(),
        failures: Vec::new(),
        access: Vec::new(),
    };
    let seed = detector_seed(config_seed, &family.name, kind.name());
    out.access.push(AccessEvent {
        phase: "fit".to_string(),
        dataset: family.name.clone(),
        role: "train+val".to_string(),
    });
    if matches!(kind, DetectorKind::Spectre) {
        out.access.push(AccessEvent {
            phase: "calibrate".to_string(),
            dataset: family.name.clone(),
            role: "val+pseudo_ood".to_string(),
        });
    }

    let fail_all = |out: &mut CellOutput, error: &Error| {
        for set in &family.anomalies {
            out.failures.push(FailedCell {
                detector: kind.name().to_string(),
                dataset: family.name.clone(),
                variant: set.variant.clone(),
                seed: config_seed,
                error: error.to_string(),
            });
        }
    };

    let detector = match fit_detector(kind, family, seed) {
        Ok(d) => d,
        Err(e) => {
            fail_all(&mut out, &e);
            return out;
        }
    };

    out.access.push(AccessEvent {
        phase: "score".to_string(),
        dataset: family.name.clone(),
        role: "test:regular".to_string(),
    });
    let regular_scores = match detector.score(
        &family.regular.features.view(),
        derive_seed(seed, &["mc", "regular"]),
    ) {
        Ok(s) => s,
        Err(e) => {
            fail_all(&mut out, &e);
            return out;
        }
    };

    for set in &family.anomalies {
        out.access.push(AccessEvent {
            phase: "score".to_string(),
            dataset: family.name.clone(),
            role: format!("test:{}", set.variant),
        });
        let cell = (|| -> Result<EvalRecord> {
            let mc = derive_seed(seed, &["mc", &set.variant]);
            let anomaly_scores = detector.score(&set.features.view(), mc)?;
            let mut scores = regular_scores.clone();
            scores.extend_from_slice(&anomaly_scores);
            let mut labels = vec![0u8; regular_scores.len()];
            labels.extend(std::iter::repeat_n(1u8, anomaly_scores.len()));
            let conf = match detector.class_probabilities(&set.features.view(), mc)? {
                Some(probs) => conf_err(&probs.view(), &set.labels)?,
                None => None,
            };
            Ok(EvalRecord {
                detector: kind.name().to_string(),
                dataset: family.name.clone(),
                variant: set.variant.clone(),
                seed: config_seed,
                auroc: auroc(&scores, &labels)?,
                aupr: aupr(&scores, &labels)?,
                fpr95: fpr95(&scores, &labels)?,
                conf_err: conf,
            })
        })();
        match cell {
            Ok(record) => out.records.push(record),
            Err(e) => out.failures.push(FailedCell {
                detector: kind.name().to_string(),
                dataset: family.name.clone(),
                variant: set.variant.clone(),
                seed: config_seed,
                error: e.to_string(),
            }),
        }
    }
    out
}

/// Runs the full evaluation protocol. Never aborts on a failed cell; the
/// outcome carries records, explicit failures, and the audit manifest.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut access_log = Vec::new();

    for selector in &config.datasets {
        let families: Vec<(u64, Result<DatasetFamily>)> = config
            .seeds
            .par_iter()
            .map(|&seed| (seed, build_family(selector, seed, config)))
            .collect();
        for (seed, family) in families {
            match family {
                Ok(family) => {
                    let outputs: Vec<CellOutput> = config
                        .detectors
                        .par_iter()
                        .map(|&kind| evaluate_detector_on_family(kind, &family, seed))
                        .collect();
                    for output in outputs {
                        records.extend(output.records);
                        failures.extend(output.failures);
                        access_log.extend(output.access);
                    }
                }
                Err(e) => {
                    // Every cell of this (dataset, seed) is a failure.
                    for kind in &config.detectors {
                        failures.push(FailedCell {
                            detector: kind.name().to_string(),
                            dataset: selector.name(),
                            variant: "*".to_string(),
                            seed,
                            error: e.to_string(),
                        });
                    }
                }
            }
        }
    }

    records.sort_by(|a, b| {
        (&a.dataset, &a.detector, &a.variant, a.seed)
            .cmp(&(&b.dataset, &b.detector, &b.variant, b.seed))
    });

    let manifest = RunManifest {
        datasets: config.datasets.iter().map(|d| d.name()).collect(),
        detectors: config.detectors.iter().map(|d| d.name().to_string()).collect(),
        seeds: config.seeds.clone(),
        noise_convention: config.noise_convention.label().to_string(),
        score_orientation: "higher_is_more_anomalous".to_string(),
        seed_derivation:
            "detector_seed = splitmix64(splitmix64(splitmix64(seed) ^ fnv1a64(dataset)) \
             ^ fnv1a64(detector))"
                .to_string(),
        conf_err_source: "classifier probabilities on the anomaly test set; absent for \
                          detectors without class probabilities"
            .to_string(),
        failures: failures.clone(),
        access_log,
    };

    Ok(RunOutcome {
        records,
        failures: manifest.failures.clone(),
        manifest,
    })
}

/// Serializes records as JSON lines, sorted and bit-reproducible.
pub fn write_records(records: &[EvalRecord], path: &Path) -> Result<()> {
    use std::io::Write;
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for record in records {
        serde_json::to_writer(&mut file, record)?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<EvalRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

/// The fourteen ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    Full,
    MinusGauss,
    MinusFtMahaP,
    MinusInMaha,
    MinusOdin,
    MinusUsd,
    MinusMi,
    MinusEnergy,
    MinusEntropy,
    NoGaussLoss,
    SingleModelK1,
    GaussOnly,
    InMahaOnly,
    OdinOnly,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 14] = [
        AblationVariant::Full,
        AblationVariant::MinusGauss,
        AblationVariant::MinusFtMahaP,
        AblationVariant::MinusInMaha,
        AblationVariant::MinusOdin,
        AblationVariant::MinusUsd,
        AblationVariant::MinusMi,
        AblationVariant::MinusEnergy,
        AblationVariant::MinusEntropy,
        AblationVariant::NoGaussLoss,
        AblationVariant::SingleModelK1,
        AblationVariant::GaussOnly,
        AblationVariant::InMahaOnly,
        AblationVariant::OdinOnly,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AblationVariant::Full => "full",
            AblationVariant::MinusGauss => "minus_gauss",
            AblationVariant::MinusFtMahaP => "minus_ft_maha_p",
            AblationVariant::MinusInMaha => "minus_in_maha",
            AblationVariant::MinusOdin => "minus_odin",
            AblationVariant::MinusUsd => "minus_usd",
            AblationVariant::MinusMi => "minus_mi",
            AblationVariant::MinusEnergy => "minus_energy",
            AblationVariant::MinusEntropy => "minus_entropy",
            AblationVariant::NoGaussLoss => "no_gauss_loss",
            AblationVariant::SingleModelK1 => "single_model_k1",
            AblationVariant::GaussOnly => "gauss_only",
            AblationVariant::InMahaOnly => "in_maha_only",
            AblationVariant::OdinOnly => "odin_only",
        }
    }

    fn removed_signal(&self) -> Option<SignalId> {
        match self {
            AblationVariant::MinusGauss => Some(SignalId::Gauss),
            AblationVariant::MinusFtMahaP => Some(SignalId::FtMahaP),
            AblationVariant::MinusInMaha => Some(SignalId::InMaha),
            AblationVariant::MinusOdin => Some(SignalId::Odin),
            AblationVariant::MinusUsd => Some(SignalId::Usd),
            AblationVariant::MinusMi => Some(SignalId::Mi),
            AblationVariant::MinusEnergy => Some(SignalId::Energy),
            AblationVariant::MinusEntropy => Some(SignalId::Entropy),
            _ => None,
        }
    }

    fn only_signal(&self) -> Option<SignalId> {
        match self {
            AblationVariant::GaussOnly => Some(SignalId::Gauss),
            AblationVariant::InMahaOnly => Some(SignalId::InMaha),
            AblationVariant::OdinOnly => Some(SignalId::Odin),
            _ => None,
        }
    }
}

/// One ablation table row, aggregated over seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    /// Per anomaly set: (mean, std) of AUROC across seeds.
    pub per_set: BTreeMap<String, (f64, f64)>,
    /// Mean/std across seeds of the per-seed overall mean (the unweighted
    /// mean over the anomaly-set AUROCs; the regular set has no AUROC
    /// against itself and is excluded).
    pub overall_mean: f64,
    pub overall_std: f64,
}

#[derive(Debug, Clone)]
pub struct AblationOutcome {
    pub rows: Vec<AblationRow>,
    pub anomaly_variants: Vec<String>,
}

fn transform_bundle(bundle: &SignalBundle, variant: AblationVariant) -> Result<SignalBundle> {
    if let Some(removed) = variant.removed_signal() {
        return Ok(bundle.without(removed));
    }
    if let Some(only) = variant.only_signal() {
        return bundle
            .only(only)
            .ok_or_else(|| Error::invalid(format!("bundle lacks {}", only.name())));
    }
    Ok(bundle.clone())
}

/// Runs the 14-variant ablation. Restricted to the synthetic dataset.
///
/// Component reuse: all signal-filtering variants share one fully trained
/// component set per seed; only the regularizer-off variant retrains the
/// encoder ensemble, reusing every ensemble-independent component.
pub fn run_ablation(config: &ExperimentConfig) -> Result<AblationOutcome> {
    if config
        .datasets
        .iter()
        .any(|d| *d != DatasetSelector::Synthetic)
    {
        return Err(Error::invalid("the ablation protocol runs on synthetic data only"));
    }

    // per seed -> per ablation variant -> per anomaly set -> auroc
    type SeedResult = BTreeMap<&'static str, BTreeMap<String, f64>>;
    let seed_results: Vec<Result<SeedResult>> = config
        .seeds
        .par_iter()
        .map(|&seed| -> Result<SeedResult> {
            let family = build_family(&DatasetSelector::Synthetic, seed, config)?;
            let spectre_config = SpectreConfig::default();
            let base_seed = detector_seed(seed, &family.name, "spectre");
            let lambda = spectre_config.gauss_lambda(family.train.n_features());

            let ensemble_full =
                train_gauss_ensemble(&family.train, &spectre_config, lambda, base_seed)?;
            let ensemble_plain =
                train_gauss_ensemble(&family.train, &spectre_config, 0.0, base_seed)?;
            let shared = fit_shared_components(&family.train, &spectre_config, base_seed)?;

            let (x_train, _) = family.train.train_rows();
            let pseudo = gen_pseudo_ood(
                &x_train.view(),
                spectre_config.pseudo_ood_size,
                base_seed + spectre_config.ensemble_size as u64 + 3,
            )?;
            let (x_val, _) = family.train.val_rows();

            let suite_full = build_suite(ensemble_full, shared.clone(), &spectre_config);
            let suite_plain = build_suite(ensemble_plain, shared, &spectre_config);

            struct Bundles {
                val: SignalBundle,
                ood: SignalBundle,
                regular: SignalBundle,
                anomalies: Vec<(String, SignalBundle)>,
            }
            let extract = |suite: &crate::signals::SignalSuite| -> Result<Bundles> {
                Ok(Bundles {
                    val: suite.extract_bundle(&x_val.view())?,
                    ood: suite.extract_bundle(&pseudo.features.view())?,
                    regular: suite.extract_bundle(&family.regular.features.view())?,
                    anomalies: family
                        .anomalies
                        .iter()
                        .map(|set| {
                            suite
                                .extract_bundle(&set.features.view())
                                .map(|b| (set.variant.clone(), b))
                        })
                        .collect::<Result<_>>()?,
                })
            };
            let bundles_full = extract(&suite_full)?;
            let bundles_plain = extract(&suite_plain)?;

            let mut per_variant: SeedResult = BTreeMap::new();
            for variant in AblationVariant::ALL {
                let bundles = if variant == AblationVariant::NoGaussLoss {
                    &bundles_plain
                } else {
                    &bundles_full
                };
                let val = transform_bundle(&bundles.val, variant)?;
                let ood = transform_bundle(&bundles.ood, variant)?;
                let mut state = calibrate(&val, &ood, spectre_config.tau)?;
                if variant == AblationVariant::SingleModelK1 {
                    state = state.with_forced_k(1);
                }
                let regular = transform_bundle(&bundles.regular, variant)?;
                let regular_scores = state.score_rows(&regular)?;

                let mut per_set = BTreeMap::new();
                for (set_name, bundle) in &bundles.anomalies {
                    let anomaly = transform_bundle(bundle, variant)?;
                    let anomaly_scores = state.score_rows(&anomaly)?;
                    let mut scores = regular_scores.clone();
                    scores.extend_from_slice(&anomaly_scores);
                    let mut labels = vec![0u8; regular_scores.len()];
                    labels.extend(std::iter::repeat_n(1u8, anomaly_scores.len()));
                    per_set.insert(set_name.clone(), auroc(&scores, &labels)?);
                }
                per_variant.insert(variant.name(), per_set);
            }
            Ok(per_variant)
        })
        .collect();

    let mut collected = Vec::new();
    for r in seed_results {
        collected.push(r?);
    }

    let anomaly_variants: Vec<String> = collected
        .first()
        .and_then(|m| m.values().next())
        .map(|sets| sets.keys().cloned().collect())
        .unwrap_or_default();

    let rows = AblationVariant::ALL
        .iter()
        .map(|variant| {
            let mut per_set = BTreeMap::new();
            for set_name in &anomaly_variants {
                let values: Vec<f64> = collected
                    .iter()
                    .map(|m| m[variant.name()][set_name])
                    .collect();
                per_set.insert(set_name.clone(), crate::metrics::mean_std(&values));
            }
            let overall: Vec<f64> = collected
                .iter()
                .map(|m| {
                    let sets = &m[variant.name()];
                    sets.values().sum::<f64>() / sets.len() as f64
                })
                .collect();
            let (overall_mean, overall_std) = crate::metrics::mean_std(&overall);
            AblationRow {
                variant: variant.name().to_string(),
                per_set,
                overall_mean,
                overall_std,
            }
        })
        .collect();

    Ok(AblationOutcome {
        rows,
        anomaly_variants,
    })
}
