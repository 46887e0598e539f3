//! Census-style tabular ingestion and structural anomaly injection.
//!
//! The ingest path reads the standard comma-separated census file, keeps the
//! five continuous attributes, one-hot encodes occupation and marital
//! status, and drops rows carrying missing markers. Anomaly injection
//! operates on raw (pre-standardization) feature units; the hidden variables
//! it introduces are never appended to the feature matrix.

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use crate::data::dataset::{DatasetMeta, LabeledDataset, SplitTag};
use crate::error::{Error, Result};
use crate::linalg::quantile_of;
use crate::seeding::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdultVariant {
    Regular,
    NewVariable,
    Mechanism,
    Confounder,
}

impl AdultVariant {
    pub const ALL: [AdultVariant; 4] = [
        AdultVariant::Regular,
        AdultVariant::NewVariable,
        AdultVariant::Mechanism,
        AdultVariant::Confounder,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AdultVariant::Regular => "regular",
            AdultVariant::NewVariable => "newvar",
            AdultVariant::Mechanism => "mechanism",
            AdultVariant::Confounder => "confounder",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|v| v.name() == s)
    }
}

const CONTINUOUS: [&str; 5] = [
    "age",
    "education-num",
    "hours-per-week",
    "capital-gain",
    "capital-loss",
];

/// Field positions in the 15-column census file.
const FIELD_AGE: usize = 0;
const FIELD_EDUCATION_NUM: usize = 4;
const FIELD_MARITAL: usize = 5;
const FIELD_OCCUPATION: usize = 6;
const FIELD_CAPITAL_GAIN: usize = 10;
const FIELD_CAPITAL_LOSS: usize = 11;
const FIELD_HOURS: usize = 12;
const FIELD_INCOME: usize = 14;

/// Reads the raw census format: five continuous columns retained, occupation
/// and marital status one-hot encoded (categories discovered from the data,
/// sorted for determinism), rows with `?` markers dropped, income binarized
/// at the 50K threshold.
pub fn load_adult_csv(path: &Path) -> Result<LabeledDataset> {
    let text = std::fs::read_to_string(path)?;
    let path_str = path.display().to_string();

    struct RawRow {
        continuous: [f64; 5],
        occupation: String,
        marital: String,
        label: usize,
    }

    let mut rows = Vec::new();
    let mut occupations = BTreeSet::new();
    let mut maritals = BTreeSet::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('|') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(|f| f.trim()).collect();
        if fields.len() != 15 {
            return Err(Error::Parse {
                path: path_str,
                row: line_no + 1,
                message: format!("expected 15 fields, got {}", fields.len()),
            });
        }
        if fields.iter().any(|f| *f == "?") {
            continue;
        }
        let parse_num = |idx: usize| -> Result<f64> {
            fields[idx].parse::<f64>().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                row: line_no + 1,
                message: format!("non-numeric value '{}' in field {idx}", fields[idx]),
            })
        };
        let continuous = [
            parse_num(FIELD_AGE)?,
            parse_num(FIELD_EDUCATION_NUM)?,
            parse_num(FIELD_HOURS)?,
            parse_num(FIELD_CAPITAL_GAIN)?,
            parse_num(FIELD_CAPITAL_LOSS)?,
        ];
        let occupation = fields[FIELD_OCCUPATION].to_string();
        let marital = fields[FIELD_MARITAL].to_string();
        occupations.insert(occupation.clone());
        maritals.insert(marital.clone());
        let label = usize::from(fields[FIELD_INCOME].contains(">50K"));
        rows.push(RawRow {
            continuous,
            occupation,
            marital,
            label,
        });
    }
    if rows.is_empty() {
        return Err(Error::invalid(format!(
            "no usable rows in {}",
            path.display()
        )));
    }

    let occupations: Vec<String> = occupations.into_iter().collect();
    let maritals: Vec<String> = maritals.into_iter().collect();
    let mut columns: Vec<String> = CONTINUOUS.iter().map(|c| c.to_string()).collect();
    columns.extend(occupations.iter().map(|c| format!("occupation={c}")));
    columns.extend(maritals.iter().map(|c| format!("marital-status={c}")));

    let width = columns.len();
    let mut features = Array2::<f64>::zeros((rows.len(), width));
    let mut labels = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        // Continuous block order: age, education-num, hours, gain, loss.
        features[[i, 0]] = row.continuous[0];
        features[[i, 1]] = row.continuous[1];
        features[[i, 2]] = row.continuous[2];
        features[[i, 3]] = row.continuous[3];
        features[[i, 4]] = row.continuous[4];
        let occ_idx = occupations.iter().position(|c| *c == row.occupation);
        if let Some(k) = occ_idx {
            features[[i, 5 + k]] = 1.0;
        }
        let mar_idx = maritals.iter().position(|c| *c == row.marital);
        if let Some(k) = mar_idx {
            features[[i, 5 + occupations.len() + k]] = 1.0;
        }
        labels.push(row.label);
    }

    let meta = DatasetMeta {
        name: "adult".to_string(),
        variant: "regular".to_string(),
        seed: 0,
        columns,
    };
    LabeledDataset::with_tag(features, labels, SplitTag::Test, meta)
}

/// Injects one structural anomaly into a copy of `base`.
///
/// The injections operate on raw feature units (before standardization):
///
/// - `newvar`: rows eligible by `z(age) + z(education-num) > 0` receive a
///   hidden inheritance flag with probability 0.3; flagged rows flip their
///   label with probability 0.2.
/// - `mechanism`: rows whose education-num lies within the middle two
///   quartiles (inclusive) flip their label with probability 0.5.
/// - `confounder`: each row receives a hidden wealthy-family flag with
///   probability 0.2; affected rows get +1 education-num and flip their
///   label with probability 0.35.
///
/// Feature width is unchanged; hidden variables are not appended.
pub fn inject_adult_anomaly(
    base: &LabeledDataset,
    variant: AdultVariant,
    seed: u64,
) -> Result<LabeledDataset> {
    let missing: Vec<&str> = CONTINUOUS
        .iter()
        .copied()
        .filter(|c| base.column_index(c).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(Error::invalid(format!(
            "missing required columns: {}",
            missing.join(", ")
        )));
    }
    let mut out = base.clone();
    out.meta.variant = variant.name().to_string();
    out.meta.seed = seed;
    if variant == AdultVariant::Regular {
        return Ok(out);
    }

    let age_col = base.column_index("age").expect("checked");
    let edu_col = base.column_index("education-num").expect("checked");
    let n = base.n_rows();
    let mut rng = rng_from_seed(seed);

    match variant {
        AdultVariant::Regular => unreachable!(),
        AdultVariant::NewVariable => {
            let (age_mean, age_std) = column_moments(base, age_col);
            let (edu_mean, edu_std) = column_moments(base, edu_col);
            for i in 0..n {
                let z_age = (base.features[[i, age_col]] - age_mean) / age_std;
                let z_edu = (base.features[[i, edu_col]] - edu_mean) / edu_std;
                let eligible = z_age + z_edu > 0.0;
                let inheritance = eligible && rng.random::<f64>() < 0.3;
                if inheritance && rng.random::<f64>() < 0.2 {
                    out.labels[i] = 1 - out.labels[i];
                }
            }
        }
        AdultVariant::Mechanism => {
            let edu: Vec<f64> = base.features.column(edu_col).to_vec();
            let q1 = quantile_of(&edu, 0.25);
            let q3 = quantile_of(&edu, 0.75);
            for i in 0..n {
                let e = base.features[[i, edu_col]];
                if e >= q1 && e <= q3 && rng.random::<f64>() < 0.5 {
                    out.labels[i] = 1 - out.labels[i];
                }
            }
        }
        AdultVariant::Confounder => {
            for i in 0..n {
                let wealthy = rng.random::<f64>() < 0.2;
                if wealthy {
                    out.features[[i, edu_col]] += 1.0;
                    if rng.random::<f64>() < 0.35 {
                        out.labels[i] = 1 - out.labels[i];
                    }
                }
            }
        }
    }
    Ok(out)
}

fn column_moments(data: &LabeledDataset, col: usize) -> (f64, f64) {
    let column = data.features.column(col);
    let n = column.len() as f64;
    let mean = column.sum() / n;
    let var = column.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt().max(crate::data::dataset::STD_FLOOR))
}

const FIXTURE_OCCUPATIONS: [&str; 13] = [
    "Adm-clerical",
    "Craft-repair",
    "Exec-managerial",
    "Farming-fishing",
    "Handlers-cleaners",
    "Machine-op-inspct",
    "Other-service",
    "Prof-specialty",
    "Protective-serv",
    "Sales",
    "Tech-support",
    "Transport-moving",
    "Priv-house-serv",
];

const FIXTURE_MARITALS: [&str; 7] = [
    "Divorced",
    "Married-AF-spouse",
    "Married-civ-spouse",
    "Married-spouse-absent",
    "Never-married",
    "Separated",
    "Widowed",
];

/// Writes a census-format fixture with the same column structure as the real
/// file (13 occupation and 7 marital categories, so 25 columns after
/// encoding). Education-num is continuous so quartile boundaries are sharp.
pub fn write_adult_fixture_csv(path: &Path, n: usize, seed: u64) -> Result<()> {
    let mut rng = rng_from_seed(seed);
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let normal = |rng: &mut crate::seeding::Rng| -> f64 {
        rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, rng)
    };
    for _ in 0..n {
        let age = (38.0 + 13.0 * normal(&mut rng)).clamp(17.0, 90.0).round();
        let edu = (10.0 + 2.5 * normal(&mut rng)).clamp(1.0, 16.0);
        let hours = (40.0 + 10.0 * normal(&mut rng)).clamp(1.0, 99.0).round();
        let gain = if rng.random::<f64>() < 0.1 {
            (1000.0 * (1.0 + rng.random::<f64>() * 9.0)).round()
        } else {
            0.0
        };
        let loss = if rng.random::<f64>() < 0.05 {
            (500.0 * (1.0 + rng.random::<f64>() * 4.0)).round()
        } else {
            0.0
        };
        let occupation = FIXTURE_OCCUPATIONS[rng.random_range(0..FIXTURE_OCCUPATIONS.len())];
        let marital = FIXTURE_MARITALS[rng.random_range(0..FIXTURE_MARITALS.len())];
        // Learnable income rule with noise, roughly 25% positive.
        let score = 0.4 * (edu - 10.0) / 2.5 + 0.3 * (hours - 40.0) / 10.0
            + 0.2 * (age - 38.0) / 13.0
            + 0.6 * normal(&mut rng);
        let income = if score > 0.7 { ">50K" } else { "<=50K" };
        writeln!(
            file,
            "{age}, Private, 100000, Some-college, {edu:.2}, {marital}, {occupation}, \
             Not-in-family, White, Female, {gain}, {loss}, {hours}, United-States, {income}"
        )?;
    }
    file.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(n: usize, seed: u64) -> LabeledDataset {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("adult_fixture.csv");
        write_adult_fixture_csv(&path, n, seed).unwrap();
        load_adult_csv(&path).unwrap()
    }

    #[test]
    fn fixture_has_25_columns_and_binary_labels() {
        let data = fixture(500, 1);
        assert_eq!(data.n_features(), 25);
        assert!(data.labels.iter().all(|&l| l <= 1));
        assert!(data.labels.iter().any(|&l| l == 1));
        for name in CONTINUOUS {
            assert!(data.column_index(name).is_some(), "missing {name}");
        }
    }

    #[test]
    fn regular_variant_is_identity() {
        let data = fixture(200, 2);
        let out = inject_adult_anomaly(&data, AdultVariant::Regular, 9).unwrap();
        assert_eq!(out.features, data.features);
        assert_eq!(out.labels, data.labels);
    }

    #[test]
    fn confounder_touches_a_fifth_of_rows() {
        let data = fixture(10_000, 3);
        let out = inject_adult_anomaly(&data, AdultVariant::Confounder, 10).unwrap();
        let edu = data.column_index("education-num").unwrap();
        let increased = (0..data.n_rows())
            .filter(|&i| out.features[[i, edu]] > data.features[[i, edu]])
            .count();
        let fraction = increased as f64 / data.n_rows() as f64;
        assert!((fraction - 0.2).abs() < 0.02, "fraction = {fraction}");
        // Feature width unchanged; hidden variable not appended.
        assert_eq!(out.n_features(), data.n_features());
    }

    #[test]
    fn mechanism_flips_a_quarter_of_labels() {
        // Education-num is continuous in the fixture, so the middle two
        // quartiles hold half the rows and the expected flip rate is 0.25.
        let data = fixture(10_000, 4);
        let out = inject_adult_anomaly(&data, AdultVariant::Mechanism, 11).unwrap();
        let flipped = data
            .labels
            .iter()
            .zip(out.labels.iter())
            .filter(|(a, b)| a != b)
            .count();
        let fraction = flipped as f64 / data.n_rows() as f64;
        assert!((fraction - 0.25).abs() < 0.02, "fraction = {fraction}");
        // Quartile-counting check: flips happen only inside [q1, q3].
        let edu_col = data.column_index("education-num").unwrap();
        let edu: Vec<f64> = data.features.column(edu_col).to_vec();
        let q1 = quantile_of(&edu, 0.25);
        let q3 = quantile_of(&edu, 0.75);
        for i in 0..data.n_rows() {
            if data.labels[i] != out.labels[i] {
                let e = data.features[[i, edu_col]];
                assert!(e >= q1 && e <= q3, "flip outside middle quartiles");
            }
        }
    }

    #[test]
    fn missing_columns_are_named() {
        let mut data = fixture(50, 5);
        data.meta.columns[0] = "renamed".to_string();
        let err = inject_adult_anomaly(&data, AdultVariant::NewVariable, 1).unwrap_err();
        assert!(err.to_string().contains("age"), "{err}");
    }
}
