//! `spectre` command-line interface: dataset generation, detector fit/score
//! on dataset files, the multi-seed evaluation sweep, the ablation, and
//! report rendering.

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::process::ExitCode;

use spectre_core::baselines::BaselineDetector;
use spectre_core::data::{
    self, gen_gridworld, gen_synthetic_with, load_feature_table, write_adult_fixture_csv,
    GeneratorManifest, GridworldVariant, LabeledDataset, NoiseConvention, SplitTag, Standardizer,
    SyntheticVariant, TableFormat,
};
use spectre_core::harness::{
    read_records, render_ablation, render_report, run_ablation, run_experiment, write_records,
    DetectorKind, ExperimentConfig,
};
use spectre_core::seeding::derive_seed;
use spectre_core::spectre::{spectre_fit, SpectreConfig, SpectreDetector};
use spectre_core::{load_json, save_json, Error, Result};

#[derive(Parser)]
#[command(
    name = "spectre",
    about = "Multi-signal anomaly detection benchmark toolkit",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset file (CSV plus a JSON manifest).
    Generate {
        /// synthetic | gridworld | adult-fixture
        #[arg(long)]
        dataset: String,
        /// Anomaly variant (dataset-specific; defaults to regular).
        #[arg(long, default_value = "regular")]
        variant: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Number of rows (steps for gridworld).
        #[arg(long, default_value_t = 10_000)]
        rows: usize,
        /// Reading of the synthetic noise scale: std | variance.
        #[arg(long, default_value = "std")]
        noise_convention: String,
        /// Output directory.
        #[arg(long, default_value = "datasets")]
        out: PathBuf,
    },
    /// Fit a detector on a dataset CSV (features + label column).
    Fit {
        /// Path to the dataset CSV.
        #[arg(long)]
        dataset: PathBuf,
        /// spectre or a baseline name (deep_ensembles, mc_dropout, ...).
        #[arg(long, default_value = "spectre")]
        detector: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output path for the fitted detector bundle (JSON).
        #[arg(long, default_value = "detector.json")]
        out: PathBuf,
    },
    /// Score a dataset CSV with a fitted detector bundle.
    Score {
        /// Path to the fitted detector bundle.
        #[arg(long)]
        model: PathBuf,
        /// Path to the dataset CSV to score (raw feature units).
        #[arg(long)]
        dataset: PathBuf,
        /// Seed for Monte Carlo scoring paths.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output CSV of anomaly scores (higher = more anomalous).
        #[arg(long, default_value = "scores.csv")]
        out: PathBuf,
    },
    /// Run the full evaluation protocol from a config file.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Override the seed list (comma-separated).
        #[arg(long)]
        seeds: Option<String>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the 14-variant ablation on synthetic data.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render summary tables and plots from a records file.
    Report {
        #[arg(long)]
        records: PathBuf,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

/// Fitted-detector persistence: the multi-signal detector carries its own
/// standardizer; baselines are wrapped with the one fitted by the pipeline.
#[derive(Serialize, Deserialize)]
enum DetectorBundle {
    Spectre(Box<SpectreDetector>),
    Baseline {
        detector: BaselineDetector,
        standardizer: Standardizer,
        input_dim: usize,
    },
}

fn generate(
    dataset: &str,
    variant: &str,
    seed: u64,
    rows: usize,
    noise_convention: &str,
    out: &PathBuf,
) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let convention = NoiseConvention::parse(noise_convention)
        .ok_or_else(|| Error::invalid(format!("unknown noise convention '{noise_convention}'")))?;
    let (data, manifest): (LabeledDataset, GeneratorManifest) = match dataset {
        "synthetic" => {
            let v = SyntheticVariant::parse(variant)
                .ok_or_else(|| Error::invalid(format!("unknown synthetic variant '{variant}'")))?;
            let data = gen_synthetic_with(rows, v, convention, seed);
            let manifest =
                GeneratorManifest::for_dataset(&data, Some(convention.label().to_string()));
            (data, manifest)
        }
        "gridworld" => {
            let v = GridworldVariant::parse(variant)
                .ok_or_else(|| Error::invalid(format!("unknown gridworld variant '{variant}'")))?;
            let data = gen_gridworld(rows, v, seed);
            let manifest = GeneratorManifest::for_dataset(&data, None);
            (data, manifest)
        }
        "adult-fixture" => {
            let path = out.join(format!("adult_fixture_{seed}.csv"));
            write_adult_fixture_csv(&path, rows, seed)?;
            let data = data::load_adult_csv(&path)?;
            let manifest = GeneratorManifest::for_dataset(&data, None);
            save_json(&manifest, &out.join(format!("adult_fixture_{seed}.manifest.json")))?;
            println!("wrote {} ({} rows)", path.display(), data.n_rows());
            return Ok(());
        }
        other => return Err(Error::invalid(format!("unknown dataset '{other}'"))),
    };
    let stem = format!("{dataset}_{variant}_{seed}");
    let csv_path = out.join(format!("{stem}.csv"));
    data::write_csv(&data, &csv_path)?;
    save_json(&manifest, &out.join(format!("{stem}.manifest.json")))?;
    println!("wrote {} ({} rows)", csv_path.display(), data.n_rows());
    Ok(())
}

fn prepare_training_data(path: &PathBuf, seed: u64) -> Result<(LabeledDataset, Standardizer)> {
    let mut data = load_feature_table(path, TableFormat::Csv)?;
    if !data.split.iter().any(|t| *t == SplitTag::Train) {
        data.split = vec![SplitTag::Train; data.n_rows()];
    }
    if !data.split.iter().any(|t| *t == SplitTag::Val) {
        data::split(&mut data, 0.8, derive_seed(seed, &["cli-split"]))?;
    }
    let standardizer = data::standardize_fit(&data)?;
    data::standardize_apply(&standardizer, &mut data)?;
    Ok((data, standardizer))
}

fn fit(dataset: &PathBuf, detector: &str, seed: u64, out: &PathBuf) -> Result<()> {
    let kind = DetectorKind::parse(detector)
        .ok_or_else(|| Error::invalid(format!("unknown detector '{detector}'")))?;
    let (data, standardizer) = prepare_training_data(dataset, seed)?;
    let bundle = match kind {
        DetectorKind::Spectre => {
            let fitted = spectre_fit(&data, &standardizer, &SpectreConfig::default(), seed)?;
            DetectorBundle::Spectre(Box::new(fitted))
        }
        DetectorKind::Baseline(b) => {
            let fitted = spectre_core::baselines::baseline_fit(b, &data, seed)?;
            DetectorBundle::Baseline {
                detector: fitted,
                standardizer,
                input_dim: data.n_features(),
            }
        }
    };
    save_json(&bundle, out)?;
    println!("fitted {detector} on {} -> {}", dataset.display(), out.display());
    Ok(())
}

fn score(model: &PathBuf, dataset: &PathBuf, seed: u64, out: &PathBuf) -> Result<()> {
    let bundle: DetectorBundle = load_json(model)?;
    let data = load_feature_table(dataset, TableFormat::Csv)?;
    let scores = match &bundle {
        DetectorBundle::Spectre(detector) => {
            let standardized = detector.standardizer.transform(&data.features.view());
            detector.score(&standardized.view())?
        }
        DetectorBundle::Baseline {
            detector,
            standardizer,
            input_dim,
        } => {
            if data.n_features() != *input_dim {
                return Err(Error::DimMismatch {
                    context: "score input".to_string(),
                    expected: *input_dim,
                    actual: data.n_features(),
                });
            }
            let standardized = standardizer.transform(&data.features.view());
            detector.score(&standardized.view(), derive_seed(seed, &["cli-mc"]))?
        }
    };
    let mut text = String::from("row,score\n");
    for (i, s) in scores.iter().enumerate() {
        text.push_str(&format!("{i},{s}\n"));
    }
    std::fs::write(out, text)?;
    println!("wrote {} ({} rows)", out.display(), scores.len());
    Ok(())
}

fn load_config(
    path: &PathBuf,
    seeds: &Option<String>,
    out: &Option<PathBuf>,
) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_file(path)?;
    if let Some(seeds) = seeds {
        config.seeds = seeds
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::invalid(format!("bad seed '{s}'")))
            })
            .collect::<Result<_>>()?;
    }
    if let Some(out) = out {
        config.out_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn evaluate(config: ExperimentConfig) -> Result<bool> {
    std::fs::create_dir_all(&config.out_dir)?;
    let outcome = run_experiment(&config)?;
    write_records(&outcome.records, &config.out_dir.join("records.jsonl"))?;
    save_json(&outcome.manifest, &config.out_dir.join("manifest.json"))?;
    if !outcome.records.is_empty() {
        render_report(&outcome.records, &config.out_dir)?;
    }
    println!(
        "{} records, {} failed cells -> {}",
        outcome.records.len(),
        outcome.failures.len(),
        config.out_dir.display()
    );
    for failure in &outcome.failures {
        log::warn!(
            "failed cell: {} / {} / {} / seed {}: {}",
            failure.detector,
            failure.dataset,
            failure.variant,
            failure.seed,
            failure.error
        );
    }
    Ok(outcome.failures.is_empty())
}

fn ablate(config: ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(&config.out_dir)?;
    let outcome = run_ablation(&config)?;
    render_ablation(&outcome, &config.out_dir)?;
    println!(
        "{} ablation rows -> {}",
        outcome.rows.len(),
        config.out_dir.display()
    );
    Ok(())
}

fn report(records_path: &PathBuf, out: &PathBuf) -> Result<()> {
    let records = read_records(records_path)?;
    let files = render_report(&records, out)?;
    println!("wrote {} files -> {}", files.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate {
            dataset,
            variant,
            seed,
            rows,
            noise_convention,
            out,
        } => generate(&dataset, &variant, seed, rows, &noise_convention, &out).map(|_| true),
        Command::Fit {
            dataset,
            detector,
            seed,
            out,
        } => fit(&dataset, &detector, seed, &out).map(|_| true),
        Command::Score {
            model,
            dataset,
            seed,
            out,
        } => score(&model, &dataset, seed, &out).map(|_| true),
        Command::Evaluate { config, seeds, out } => {
            let config = load_config(&config, &seeds, &out)?;
            evaluate(config)
        }
        Command::Ablate { config, seeds, out } => {
            let config = load_config(&config, &seeds, &out)?;
            ablate(config).map(|_| true)
        }
        Command::Report { records, out } => report(&records, &out).map(|_| true),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        // Completed, but some cells failed; outputs mark them.
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
