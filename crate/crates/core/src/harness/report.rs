//! Result rendering: per-metric summary tables shaped like the paper-style
//! grids (rows = dataset x detector, columns = anomaly variants, cells =
//! mean±std with a best-marker column per variant) and static SVG bar
//! charts. All outputs are deterministic byte-for-byte for a given record
//! set.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::runner::AblationOutcome;
use crate::metrics::{mean_std, EvalRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SummaryMetric {
    Auroc,
    Aupr,
    Fpr95,
}

impl SummaryMetric {
    pub fn name(&self) -> &'static str {
        match self {
            SummaryMetric::Auroc => "auroc",
            SummaryMetric::Aupr => "aupr",
            SummaryMetric::Fpr95 => "fpr95",
        }
    }

    fn value(&self, record: &EvalRecord) -> f64 {
        match self {
            SummaryMetric::Auroc => record.auroc,
            SummaryMetric::Aupr => record.aupr,
            SummaryMetric::Fpr95 => record.fpr95,
        }
    }

    /// Whether smaller is better (controls the best-marker column).
    fn lower_is_better(&self) -> bool {
        matches!(self, SummaryMetric::Fpr95)
    }
}

type CellKey = (String, String, String); // dataset, detector, variant

fn group_records(
    records: &[EvalRecord],
    metric: SummaryMetric,
) -> BTreeMap<CellKey, Vec<f64>> {
    let mut cells: BTreeMap<CellKey, Vec<f64>> = BTreeMap::new();
    for r in records {
        cells
            .entry((r.dataset.clone(), r.detector.clone(), r.variant.clone()))
            .or_default()
            .push(metric.value(r));
    }
    cells
}

/// Writes one summary CSV. Columns: dataset, detector, then one value column
/// and one `_best` marker column per anomaly variant; missing combinations
/// render as a dash.
pub fn write_summary(
    records: &[EvalRecord],
    metric: SummaryMetric,
    path: &Path,
) -> Result<()> {
    if records.is_empty() {
        return Err(Error::invalid("no records to summarize"));
    }
    let cells = group_records(records, metric);

    let mut datasets: Vec<String> = records.iter().map(|r| r.dataset.clone()).collect();
    datasets.sort();
    datasets.dedup();
    let mut detectors: Vec<String> = records.iter().map(|r| r.detector.clone()).collect();
    detectors.sort();
    detectors.dedup();
    let mut variants: Vec<String> = records.iter().map(|r| r.variant.clone()).collect();
    variants.sort();
    variants.dedup();

    // Best detector per (dataset, variant) by mean.
    let mut best: BTreeMap<(String, String), String> = BTreeMap::new();
    for dataset in &datasets {
        for variant in &variants {
            let mut chosen: Option<(&str, f64)> = None;
            for detector in &detectors {
                let key = (dataset.clone(), detector.clone(), variant.clone());
                if let Some(values) = cells.get(&key) {
                    let (mean, _) = mean_std(values);
                    let better = match chosen {
                        None => true,
                        Some((_, incumbent)) => {
                            if metric.lower_is_better() {
                                mean < incumbent
                            } else {
                                mean > incumbent
                            }
                        }
                    };
                    if better {
                        chosen = Some((detector, mean));
                    }
                }
            }
            if let Some((detector, _)) = chosen {
                best.insert((dataset.clone(), variant.clone()), detector.to_string());
            }
        }
    }

    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["dataset".to_string(), "detector".to_string()];
    for v in &variants {
        header.push(v.clone());
        header.push(format!("{v}_best"));
    }
    writer.write_record(&header)?;
    for dataset in &datasets {
        for detector in &detectors {
            let mut row = vec![dataset.clone(), detector.clone()];
            let mut any = false;
            for variant in &variants {
                let key = (dataset.clone(), detector.clone(), variant.clone());
                match cells.get(&key) {
                    Some(values) => {
                        any = true;
                        row.push(crate::metrics::format_mean_std(values));
                        let marker = best
                            .get(&(dataset.clone(), variant.clone()))
                            .filter(|b| *b == detector)
                            .map(|_| "*")
                            .unwrap_or("");
                        row.push(marker.to_string());
                    }
                    None => {
                        row.push("-".to_string());
                        row.push(String::new());
                    }
                }
            }
            if any {
                writer.write_record(&row)?;
            }
        }
    }
    writer.flush()?;
    Ok(())
}

/// Writes the ablation table. The header comment records that the overall
/// mean is taken over the anomaly sets only (the regular set has no AUROC
/// against itself).
pub fn write_ablation_csv(outcome: &AblationOutcome, path: &Path) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        file,
        "# overall_mean averages AUROC over the anomaly test sets only; the regular set \
         defines no AUROC against itself and is excluded"
    )?;
    let mut header = vec!["variant".to_string()];
    for v in &outcome.anomaly_variants {
        header.push(v.clone());
    }
    header.push("overall_mean".to_string());
    header.push("overall_std".to_string());
    writeln!(file, "{}", header.join(","))?;
    for row in &outcome.rows {
        let mut fields = vec![row.variant.clone()];
        for v in &outcome.anomaly_variants {
            let (mean, std) = row.per_set[v];
            fields.push(format!("{mean:.4}±{std:.4}"));
        }
        fields.push(format!("{:.4}", row.overall_mean));
        fields.push(format!("{:.4}", row.overall_std));
        writeln!(file, "{}", fields.join(","))?;
    }
    file.flush()?;
    Ok(())
}

/// ConfErr values render as `null` when absent, never 0.
pub fn write_conf_err_csv(records: &[EvalRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::invalid("no records to summarize"));
    }
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["dataset", "detector", "variant", "seed", "conf_err"])?;
    for r in records {
        let value = match r.conf_err {
            Some(v) => format!("{v:.6}"),
            None => "null".to_string(),
        };
        writer.write_record([
            r.dataset.as_str(),
            r.detector.as_str(),
            r.variant.as_str(),
            &r.seed.to_string(),
            &value,
        ])?;
    }
    writer.flush()?;
    Ok(())
}

const PALETTE: [&str; 14] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7",
    "#9c755f", "#bab0ac", "#1f77b4", "#2ca02c", "#d62728", "#9467bd",
];

/// Minimal grouped bar chart, written as a static SVG.
pub fn svg_grouped_bars(
    title: &str,
    groups: &[String],
    series: &[(String, Vec<f64>)],
    path: &Path,
) -> Result<()> {
    if groups.is_empty() || series.is_empty() {
        return Err(Error::invalid("empty chart"));
    }
    let width = 960.0;
    let height = 440.0;
    let margin_left = 60.0;
    let margin_right = 20.0;
    let margin_top = 70.0;
    let margin_bottom = 60.0;
    let plot_w = width - margin_left - margin_right;
    let plot_h = height - margin_top - margin_bottom;

    let max_value = series
        .iter()
        .flat_map(|(_, v)| v.iter())
        .cloned()
        .fold(0.0f64, f64::max)
        .max(1.0);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"30\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">{title}</text>\n",
        width / 2.0
    ));

    // Horizontal gridlines and axis labels at quarters of the value range.
    for i in 0..=4 {
        let frac = i as f64 / 4.0;
        let y = margin_top + plot_h * (1.0 - frac);
        let value = max_value * frac;
        svg.push_str(&format!(
            "<line x1=\"{margin_left:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" \
             stroke=\"#dddddd\"/>\n",
            margin_left + plot_w
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">{value:.2}</text>\n",
            margin_left - 6.0,
            y + 4.0
        ));
    }

    let group_w = plot_w / groups.len() as f64;
    let bar_w = (group_w * 0.9) / series.len() as f64;
    for (g, group) in groups.iter().enumerate() {
        let gx = margin_left + g as f64 * group_w;
        for (s, (_, values)) in series.iter().enumerate() {
            let value = values.get(g).copied().unwrap_or(0.0).max(0.0);
            let h = plot_h * (value / max_value);
            let x = gx + group_w * 0.05 + s as f64 * bar_w;
            let y = margin_top + plot_h - h;
            svg.push_str(&format!(
                "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{h:.2}\" \
                 fill=\"{}\"/>\n",
                bar_w * 0.92,
                PALETTE[s % PALETTE.len()]
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"middle\">{group}</text>\n",
            gx + group_w / 2.0,
            margin_top + plot_h + 18.0
        ));
    }

    // Legend.
    let mut lx = margin_left;
    let ly = 44.0;
    for (s, (name, _)) in series.iter().enumerate() {
        svg.push_str(&format!(
            "<rect x=\"{lx:.1}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{}\"/>\n",
            ly - 9.0,
            PALETTE[s % PALETTE.len()]
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{ly:.1}\" font-family=\"sans-serif\" \
             font-size=\"11\">{name}</text>\n",
            lx + 14.0
        ));
        lx += 14.0 + 7.0 * name.len() as f64 + 16.0;
    }

    svg.push_str("</svg>\n");
    std::fs::write(path, svg)?;
    Ok(())
}

/// Renders summary CSVs, per-dataset AUROC bar charts, and the confident-
/// error table into `out_dir`. Refuses an empty record set.
pub fn render_report(records: &[EvalRecord], out_dir: &Path) -> Result<Vec<String>> {
    if records.is_empty() {
        return Err(Error::invalid("refusing to render an empty record set"));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    for metric in [SummaryMetric::Auroc, SummaryMetric::Aupr, SummaryMetric::Fpr95] {
        let name = format!("summary_{}.csv", metric.name());
        write_summary(records, metric, &out_dir.join(&name))?;
        written.push(name);
    }
    write_conf_err_csv(records, &out_dir.join("conf_err.csv"))?;
    written.push("conf_err.csv".to_string());

    // Per-dataset grouped AUROC chart: groups = variants, series = detectors.
    let mut datasets: Vec<String> = records.iter().map(|r| r.dataset.clone()).collect();
    datasets.sort();
    datasets.dedup();
    for dataset in &datasets {
        let subset: Vec<&EvalRecord> = records.iter().filter(|r| &r.dataset == dataset).collect();
        let mut variants: Vec<String> = subset.iter().map(|r| r.variant.clone()).collect();
        variants.sort();
        variants.dedup();
        let mut detectors: Vec<String> = subset.iter().map(|r| r.detector.clone()).collect();
        detectors.sort();
        detectors.dedup();
        let series: Vec<(String, Vec<f64>)> = detectors
            .iter()
            .map(|detector| {
                let values: Vec<f64> = variants
                    .iter()
                    .map(|variant| {
                        let cell: Vec<f64> = subset
                            .iter()
                            .filter(|r| &r.detector == detector && &r.variant == variant)
                            .map(|r| r.auroc)
                            .collect();
                        if cell.is_empty() {
                            0.0
                        } else {
                            mean_std(&cell).0
                        }
                    })
                    .collect();
                (detector.clone(), values)
            })
            .collect();
        let file = format!("auroc_{}.svg", dataset.replace(':', "_"));
        svg_grouped_bars(
            &format!("Mean AUROC per anomaly type: {dataset}"),
            &variants,
            &series,
            &out_dir.join(&file),
        )?;
        written.push(file);
    }
    Ok(written)
}

/// Renders the ablation CSV and its bar chart.
pub fn render_ablation(outcome: &AblationOutcome, out_dir: &Path) -> Result<Vec<String>> {
    std::fs::create_dir_all(out_dir)?;
    write_ablation_csv(outcome, &out_dir.join("ablation.csv"))?;
    let groups: Vec<String> = outcome.rows.iter().map(|r| r.variant.clone()).collect();
    let values: Vec<f64> = outcome.rows.iter().map(|r| r.overall_mean).collect();
    svg_grouped_bars(
        "Ablation: overall mean AUROC per variant",
        &groups,
        &[("overall".to_string(), values)],
        &out_dir.join("ablation.svg"),
    )?;
    Ok(vec!["ablation.csv".to_string(), "ablation.svg".to_string()])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(detector: &str, variant: &str, seed: u64, auroc: f64) -> EvalRecord {
        EvalRecord {
            detector: detector.to_string(),
            dataset: "synthetic".to_string(),
            variant: variant.to_string(),
            seed,
            auroc,
            aupr: auroc,
            fpr95: 1.0 - auroc,
            conf_err: if seed % 2 == 0 { Some(0.1) } else { None },
        }
    }

    #[test]
    fn one_record_renders_one_row() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![record("spectre", "confounder", 42, 0.75)];
        write_summary(&records, SummaryMetric::Auroc, &dir.path().join("s.csv")).unwrap();
        let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
        let lines: Vec<&str> = text.trim().lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].contains("0.7500±0.0000"), "{}", lines[1]);
    }

    #[test]
    fn best_marker_lands_on_the_top_mean() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![
            record("spectre", "confounder", 42, 0.8),
            record("spectre", "confounder", 43, 0.8),
            record("usd", "confounder", 42, 0.7),
            record("usd", "confounder", 43, 0.7),
        ];
        let path = dir.path().join("s.csv");
        write_summary(&records, SummaryMetric::Auroc, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let spectre_line = text.lines().find(|l| l.contains("spectre")).unwrap();
        let usd_line = text.lines().find(|l| l.contains(",usd,") || l.starts_with("synthetic,usd")).unwrap();
        assert!(spectre_line.ends_with('*'), "{spectre_line}");
        assert!(!usd_line.ends_with('*'), "{usd_line}");

        // FPR95 flips the direction: lower is better.
        let path = dir.path().join("f.csv");
        write_summary(&records, SummaryMetric::Fpr95, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let spectre_line = text.lines().find(|l| l.contains("spectre")).unwrap();
        assert!(spectre_line.ends_with('*'), "{spectre_line}");
    }

    #[test]
    fn absent_conf_err_renders_null() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![
            record("spectre", "confounder", 42, 0.8),
            record("spectre", "confounder", 43, 0.8),
        ];
        let path = dir.path().join("c.csv");
        write_conf_err_csv(&records, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("null"), "{text}");
        assert!(text.contains("0.100000"), "{text}");
    }

    #[test]
    fn empty_record_set_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        assert!(render_report(&[], dir.path()).is_err());
    }

    #[test]
    fn report_emits_deterministic_files() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let records = vec![
            record("spectre", "confounder", 42, 0.8),
            record("usd", "mechanism", 42, 0.6),
        ];
        let a = render_report(&records, dir_a.path()).unwrap();
        let b = render_report(&records, dir_b.path()).unwrap();
        assert_eq!(a, b);
        for file in &a {
            let bytes_a = std::fs::read(dir_a.path().join(file)).unwrap();
            let bytes_b = std::fs::read(dir_b.path().join(file)).unwrap();
            assert_eq!(bytes_a, bytes_b, "{file}");
        }
    }
}
