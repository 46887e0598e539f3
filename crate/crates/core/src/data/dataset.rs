//! Labeled datasets, standardization, and train/validation splitting.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::rng_from_seed;

/// Minimum standard deviation; constant columns are floored here so the
/// transform maps them to zero.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl SplitTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(SplitTag::Train),
            "val" => Some(SplitTag::Val),
            "test" => Some(SplitTag::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub variant: String,
    pub seed: u64,
    pub columns: Vec<String>,
}

/// Feature matrix plus class labels, per-row split tags, and provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub split: Vec<SplitTag>,
    pub meta: DatasetMeta,
}

impl LabeledDataset {
    /// Builds a dataset with every row tagged `tag`.
    pub fn with_tag(
        features: Array2<f64>,
        labels: Vec<usize>,
        tag: SplitTag,
        meta: DatasetMeta,
    ) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::invalid(format!(
                "feature rows ({}) and labels ({}) differ",
                features.nrows(),
                labels.len()
            )));
        }
        if meta.columns.len() != features.ncols() {
            return Err(Error::invalid(format!(
                "column names ({}) and feature width ({}) differ",
                meta.columns.len(),
                features.ncols()
            )));
        }
        let split = vec![tag; features.nrows()];
        Ok(Self {
            features,
            labels,
            split,
            meta,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Number of classes implied by the labels (max label + 1, at least 1).
    pub fn n_classes(&self) -> usize {
        self.labels.iter().copied().max().map_or(1, |m| m + 1)
    }

    pub fn rows_with_tag(&self, tag: SplitTag) -> (Array2<f64>, Vec<usize>) {
        let idx: Vec<usize> = self
            .split
            .iter()
            .enumerate()
            .filter(|(_, t)| **t == tag)
            .map(|(i, _)| i)
            .collect();
        let mut x = Array2::<f64>::zeros((idx.len(), self.n_features()));
        let mut y = Vec::with_capacity(idx.len());
        for (row, &i) in idx.iter().enumerate() {
            x.row_mut(row).assign(&self.features.row(i));
            y.push(self.labels[i]);
        }
        (x, y)
    }

    pub fn train_rows(&self) -> (Array2<f64>, Vec<usize>) {
        self.rows_with_tag(SplitTag::Train)
    }

    pub fn val_rows(&self) -> (Array2<f64>, Vec<usize>) {
        self.rows_with_tag(SplitTag::Val)
    }

    /// Index of a named column.
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.meta.columns.iter().position(|c| c == name)
    }

    /// Confirms every feature value is finite.
    pub fn check_finite(&self) -> Result<()> {
        for (i, row) in self.features.rows().into_iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::invalid(format!(
                        "non-finite feature at row {i}, column {j} ({})",
                        self.meta.columns[j]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-column affine transform fitted on training-split rows only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Array1<f64>,
    pub stds: Array1<f64>,
}

/// Fits column means and standard deviations on the rows tagged `train`.
pub fn standardize_fit(data: &LabeledDataset) -> Result<Standardizer> {
    let (x, _) = data.train_rows();
    standardize_fit_matrix(&x.view())
}

/// Fits a standardizer on an explicit matrix.
pub fn standardize_fit_matrix(x: &ArrayView2<f64>) -> Result<Standardizer> {
    if x.nrows() < 2 {
        return Err(Error::invalid(
            "standardizer fit needs at least 2 rows",
        ));
    }
    let means = x.mean_axis(Axis(0)).expect("nonempty");
    let n = x.nrows() as f64;
    let mut stds = Array1::<f64>::zeros(x.ncols());
    for row in x.rows() {
        for j in 0..x.ncols() {
            let c = row[j] - means[j];
            stds[j] += c * c;
        }
    }
    stds.mapv_inplace(|v| (v / n).sqrt().max(STD_FLOOR));
    Ok(Standardizer { means, stds })
}

/// Applies the transform verbatim to every row of `data`.
pub fn standardize_apply(standardizer: &Standardizer, data: &mut LabeledDataset) -> Result<()> {
    if standardizer.means.len() != data.n_features() {
        return Err(Error::DimMismatch {
            context: "standardizer".to_string(),
            expected: standardizer.means.len(),
            actual: data.n_features(),
        });
    }
    for mut row in data.features.rows_mut() {
        for j in 0..row.len() {
            row[j] = (row[j] - standardizer.means[j]) / standardizer.stds[j];
        }
    }
    data.check_finite()
}

impl Standardizer {
    /// Transforms a bare matrix with the fitted statistics.
    pub fn transform(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for j in 0..row.len() {
                row[j] = (row[j] - self.means[j]) / self.stds[j];
            }
        }
        out
    }
}

/// Randomly partitions all rows into train/val tags, deterministic per seed.
/// For classification data, every class present overall must appear in both
/// partitions; the shuffle is retried up to 10 times, then refused.
pub fn split(data: &mut LabeledDataset, train_frac: f64, seed: u64) -> Result<()> {
    let n = data.n_rows();
    if n < 5 {
        return Err(Error::invalid(format!("split needs at least 5 rows, got {n}")));
    }
    if !(0.0..1.0).contains(&train_frac) || train_frac == 0.0 {
        return Err(Error::invalid("train_frac must be in (0, 1)"));
    }
    let n_train = (train_frac * n as f64).round() as usize;
    let n_train = n_train.clamp(1, n - 1);

    let classes: Vec<usize> = {
        let mut c = data.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    };

    let mut rng = rng_from_seed(seed);
    let mut order: Vec<usize> = (0..n).collect();
    for _attempt in 0..10 {
        order.shuffle(&mut rng);
        let train_set = &order[..n_train];
        let val_set = &order[n_train..];
        let covered = |rows: &[usize]| {
            classes.iter().all(|c| rows.iter().any(|&i| data.labels[i] == *c))
        };
        if covered(train_set) && covered(val_set) {
            for &i in train_set {
                data.split[i] = SplitTag::Train;
            }
            for &i in val_set {
                data.split[i] = SplitTag::Val;
            }
            return Ok(());
        }
    }
    Err(Error::invalid(
        "split failed: a partition lost a class in 10 reshuffles",
    ))
}

/// Manifest emitted next to generated dataset files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorManifest {
    pub dataset: String,
    pub variant: String,
    pub seed: u64,
    pub rows: usize,
    pub columns: usize,
    /// How the synthetic noise scale parameter is interpreted; `variance-0.3`
    /// unless explicitly overridden.
    pub noise_convention: Option<String>,
}

impl GeneratorManifest {
    pub fn for_dataset(data: &LabeledDataset, noise_convention: Option<String>) -> Self {
        Self {
            dataset: data.meta.name.clone(),
            variant: data.meta.variant.clone(),
            seed: data.meta.seed,
            rows: data.n_rows(),
            columns: data.n_features(),
            noise_convention,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy(n: usize, labels: Vec<usize>) -> LabeledDataset {
        let features = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64);
        LabeledDataset::with_tag(
            features,
            labels,
            SplitTag::Train,
            DatasetMeta {
                name: "toy".to_string(),
                variant: "regular".to_string(),
                seed: 0,
                columns: vec!["a".to_string(), "b".to_string()],
            },
        )
        .unwrap()
    }

    #[test]
    fn split_is_exact_and_deterministic() {
        let labels: Vec<usize> = (0..1000).map(|i| i % 2).collect();
        let mut a = toy(1000, labels.clone());
        let mut b = toy(1000, labels);
        split(&mut a, 0.8, 7).unwrap();
        split(&mut b, 0.8, 7).unwrap();
        let n_train = a.split.iter().filter(|t| **t == SplitTag::Train).count();
        assert_eq!(n_train, 800);
        assert_eq!(a.split, b.split);
    }

    #[test]
    fn split_preserves_classes_in_small_data() {
        // 10 rows, two classes; both partitions must contain both classes for
        // every seed tried.
        for seed in 0..50 {
            let labels = vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
            let mut data = toy(10, labels);
            split(&mut data, 0.8, seed).unwrap();
            for tag in [SplitTag::Train, SplitTag::Val] {
                let (_, y) = data.rows_with_tag(tag);
                assert!(y.contains(&0) && y.contains(&1), "seed {seed}");
            }
        }
    }

    #[test]
    fn split_refuses_when_class_presence_is_impossible() {
        // A single instance of class 1 cannot appear in both partitions.
        let labels = vec![0, 0, 0, 0, 1];
        let mut data = toy(5, labels);
        assert!(split(&mut data, 0.8, 3).is_err());
    }

    #[test]
    fn standardize_centers_fit_rows() {
        let labels = vec![0, 1, 0, 1, 0, 1];
        let mut data = toy(6, labels);
        data.features = array![
            [1.0, 5.0],
            [2.0, 5.0],
            [3.0, 5.0],
            [4.0, 5.0],
            [5.0, 5.0],
            [6.0, 5.0]
        ];
        let standardizer = standardize_fit(&data).unwrap();
        standardize_apply(&standardizer, &mut data).unwrap();
        let mean0: f64 = data.features.column(0).sum() / 6.0;
        assert!(mean0.abs() < 1e-9);
        // Constant column: std floored, transformed to all zeros.
        assert!(data.features.column(1).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn standardize_preserves_shift_on_held_out_rows() {
        // Two-column toy table; a test set shifted by +2 in raw units keeps
        // the shift (in standardized units) after applying the fit transform.
        let labels = vec![0, 1, 0, 1];
        let mut train = toy(4, labels.clone());
        train.features = array![[0.0, 0.0], [1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        let standardizer = standardize_fit(&train).unwrap();
        let shifted = array![[2.0, 0.0], [3.0, 2.0], [4.0, 4.0], [5.0, 6.0]];
        let transformed = standardizer.transform(&shifted.view());
        let base = standardizer.transform(&train.features.view());
        for i in 0..4 {
            let delta = transformed[[i, 0]] - base[[i, 0]];
            // std of column 0 is sqrt(5/4); shift of 2 raw units becomes
            // 2 / sqrt(1.25) standardized units.
            approx::assert_abs_diff_eq!(delta, 2.0 / (1.25f64).sqrt(), epsilon = 1e-12);
            approx::assert_abs_diff_eq!(
                transformed[[i, 1]] - base[[i, 1]],
                0.0,
                epsilon = 1e-12
            );
        }
    }
}
