//! Feature-table file formats.
//!
//! Two interchange formats are supported:
//!
//! - CSV: header row names the columns, a `label` column is mandatory, a
//!   `split` column (train/val/test) is optional; all other columns are
//!   numeric features.
//! - Raw float: a 16-byte header (8-byte magic `SPECFT01`, rows as u32 LE,
//!   cols as u32 LE) followed by row-major little-endian f32 values. The
//!   last column is the label; values are widened to f64 on load.

use ndarray::Array2;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::dataset::{DatasetMeta, LabeledDataset, SplitTag};
use crate::error::{Error, Result};

pub const RAW_MAGIC: &[u8; 8] = b"SPECFT01";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    RawFloat,
}

/// Loads a feature table in either format.
pub fn load_feature_table(path: &Path, format: TableFormat) -> Result<LabeledDataset> {
    match format {
        TableFormat::Csv => load_csv(path),
        TableFormat::RawFloat => load_raw(path),
    }
}

fn load_csv(path: &Path) -> Result<LabeledDataset> {
    let path_str = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let label_idx = headers
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| Error::Parse {
            path: path_str.clone(),
            row: 1,
            message: "missing mandatory 'label' column".to_string(),
        })?;
    let split_idx = headers.iter().position(|h| h == "split");
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&i| i != label_idx && Some(i) != split_idx)
        .collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut splits = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let record = record?;
        let file_row = row_no + 2; // 1-based, after the header
        if record.len() != headers.len() {
            return Err(Error::Parse {
                path: path_str.clone(),
                row: file_row,
                message: format!(
                    "ragged row: expected {} fields, got {}",
                    headers.len(),
                    record.len()
                ),
            });
        }
        let mut feats = Vec::with_capacity(feature_cols.len());
        for &col in &feature_cols {
            let cell = record.get(col).unwrap_or("").trim();
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                path: path_str.clone(),
                row: file_row,
                message: format!("non-numeric cell '{}' in column '{}'", cell, headers[col]),
            })?;
            feats.push(value);
        }
        let label_cell = record.get(label_idx).unwrap_or("").trim();
        let label_f: f64 = label_cell.parse().map_err(|_| Error::Parse {
            path: path_str.clone(),
            row: file_row,
            message: format!("non-numeric label '{label_cell}'"),
        })?;
        if label_f < 0.0 || label_f.fract() != 0.0 {
            return Err(Error::Parse {
                path: path_str.clone(),
                row: file_row,
                message: format!("label '{label_cell}' is not a nonnegative integer"),
            });
        }
        labels.push(label_f as usize);
        if let Some(si) = split_idx {
            let cell = record.get(si).unwrap_or("").trim();
            let tag = SplitTag::parse(cell).ok_or_else(|| Error::Parse {
                path: path_str.clone(),
                row: file_row,
                message: format!("unknown split tag '{cell}'"),
            })?;
            splits.push(tag);
        }
        rows.push(feats);
    }
    if rows.is_empty() {
        return Err(Error::invalid(format!("no data rows in {path_str}")));
    }

    let width = feature_cols.len();
    let mut features = Array2::<f64>::zeros((rows.len(), width));
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            features[[i, j]] = *v;
        }
    }
    let columns: Vec<String> = feature_cols
        .iter()
        .map(|&i| headers[i].clone())
        .collect();
    let meta = DatasetMeta {
        name: path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| "table".to_string()),
        variant: "regular".to_string(),
        seed: 0,
        columns,
    };
    let mut data = LabeledDataset::with_tag(features, labels, SplitTag::Test, meta)?;
    if !splits.is_empty() {
        data.split = splits;
    }
    Ok(data)
}

fn load_raw(path: &Path) -> Result<LabeledDataset> {
    let path_str = path.display().to_string();
    let mut file = std::fs::File::open(path)?;
    let mut header = [0u8; 16];
    file.read_exact(&mut header).map_err(|_| Error::Parse {
        path: path_str.clone(),
        row: 0,
        message: "truncated header".to_string(),
    })?;
    if &header[..8] != RAW_MAGIC {
        return Err(Error::Parse {
            path: path_str.clone(),
            row: 0,
            message: "bad magic; not a raw feature table".to_string(),
        });
    }
    let rows = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    if cols < 2 {
        return Err(Error::Parse {
            path: path_str.clone(),
            row: 0,
            message: format!("need at least 2 columns (features + label), got {cols}"),
        });
    }
    let mut payload = Vec::new();
    file.read_to_end(&mut payload)?;
    let expected = rows * cols * 4;
    if payload.len() != expected {
        return Err(Error::Parse {
            path: path_str.clone(),
            row: 0,
            message: format!(
                "payload size mismatch: header implies {expected} bytes, found {}",
                payload.len()
            ),
        });
    }

    let width = cols - 1;
    let mut features = Array2::<f64>::zeros((rows, width));
    let mut labels = Vec::with_capacity(rows);
    for i in 0..rows {
        for j in 0..cols {
            let offset = (i * cols + j) * 4;
            let v = f32::from_le_bytes(payload[offset..offset + 4].try_into().unwrap()) as f64;
            if j < width {
                features[[i, j]] = v;
            } else {
                if v < 0.0 || !v.is_finite() {
                    return Err(Error::Parse {
                        path: path_str.clone(),
                        row: i + 1,
                        message: format!("invalid label value {v}"),
                    });
                }
                labels.push(v as usize);
            }
        }
    }
    let columns: Vec<String> = (0..width).map(|j| format!("f{j}")).collect();
    let meta = DatasetMeta {
        name: path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| "table".to_string()),
        variant: "regular".to_string(),
        seed: 0,
        columns,
    };
    LabeledDataset::with_tag(features, labels, SplitTag::Test, meta)
}

/// Writes a dataset as CSV (features + label + split).
pub fn write_csv(data: &LabeledDataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = data.meta.columns.clone();
    header.push("label".to_string());
    header.push("split".to_string());
    writer.write_record(&header)?;
    for i in 0..data.n_rows() {
        let mut record: Vec<String> = data
            .features
            .row(i)
            .iter()
            .map(|v| format!("{v}"))
            .collect();
        record.push(data.labels[i].to_string());
        record.push(data.split[i].as_str().to_string());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes a dataset in the raw float format (labels as the final column).
/// Feature values are narrowed to f32.
pub fn write_raw(data: &LabeledDataset, path: &Path) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let rows = data.n_rows() as u32;
    let cols = (data.n_features() + 1) as u32;
    file.write_all(RAW_MAGIC)?;
    file.write_all(&rows.to_le_bytes())?;
    file.write_all(&cols.to_le_bytes())?;
    for i in 0..data.n_rows() {
        for v in data.features.row(i) {
            file.write_all(&(*v as f32).to_le_bytes())?;
        }
        file.write_all(&(data.labels[i] as f32).to_le_bytes())?;
    }
    file.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::dataset::DatasetMeta;
    use ndarray::array;

    fn toy() -> LabeledDataset {
        LabeledDataset::with_tag(
            array![[0.125, -3.5], [7.25, 0.0625], [1e-3, 42.0]],
            vec![0, 1, 0],
            SplitTag::Test,
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
    fn raw_round_trip_preserves_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.bin");
        let data = toy();
        write_raw(&data, &path).unwrap();
        let back = load_feature_table(&path, TableFormat::RawFloat).unwrap();
        assert_eq!(back.n_rows(), 3);
        assert_eq!(back.n_features(), 2);
        assert_eq!(back.labels, data.labels);
        for (a, b) in data.features.iter().zip(back.features.iter()) {
            assert_eq!(*a as f32, *b as f32);
        }
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.csv");
        let data = toy();
        write_csv(&data, &path).unwrap();
        let back = load_feature_table(&path, TableFormat::Csv).unwrap();
        assert_eq!(back.features, data.features);
        assert_eq!(back.labels, data.labels);
        assert_eq!(back.split, data.split);
    }

    #[test]
    fn ragged_csv_row_is_reported_with_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ragged.csv");
        std::fs::write(&path, "a,b,label\n1.0,2.0,0\n1.0,1\n").unwrap();
        let err = load_feature_table(&path, TableFormat::Csv).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 3"), "{msg}");
    }

    #[test]
    fn non_numeric_cell_is_reported_with_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,b,label\n1.0,oops,0\n").unwrap();
        let err = load_feature_table(&path, TableFormat::Csv).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("'oops'") && msg.contains("'b'"), "{msg}");
    }

    #[test]
    fn missing_label_column_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nolabel.csv");
        std::fs::write(&path, "a,b\n1.0,2.0\n").unwrap();
        let err = load_feature_table(&path, TableFormat::Csv).unwrap_err();
        assert!(err.to_string().contains("label"), "{err}");
    }

    #[test]
    fn wide_tables_load_with_512_features() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wide.bin");
        let n = 4;
        let d = 512;
        let features = Array2::from_shape_fn((n, d), |(i, j)| (i * d + j) as f64 * 0.01);
        let data = LabeledDataset::with_tag(
            features,
            vec![0, 1, 2, 3],
            SplitTag::Test,
            DatasetMeta {
                name: "wide".to_string(),
                variant: "regular".to_string(),
                seed: 0,
                columns: (0..d).map(|j| format!("f{j}")).collect(),
            },
        )
        .unwrap();
        write_raw(&data, &path).unwrap();
        let back = load_feature_table(&path, TableFormat::RawFloat).unwrap();
        assert_eq!(back.n_features(), 512);
    }
}
