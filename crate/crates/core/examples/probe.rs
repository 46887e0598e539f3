//! Diagnostic probe: runs one seed of the synthetic and gridworld protocols
//! and prints calibration internals and per-variant metrics.

use spectre_core::harness::{build_family, detector_seed, DatasetSelector, ExperimentConfig};
use spectre_core::metrics::auroc;
use spectre_core::spectre::{spectre_fit, SpectreConfig};

fn main() -> spectre_core::Result<()> {
    let config = ExperimentConfig::default();
    let seeds: Vec<u64> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let seeds = if seeds.is_empty() { vec![42] } else { seeds };

    for (selector, run_seed) in [DatasetSelector::Synthetic, DatasetSelector::Gridworld]
        .into_iter()
        .flat_map(|sel| seeds.iter().map(move |&s| (sel.clone(), s)))
    {
        let started = std::time::Instant::now();
        let family = build_family(&selector, run_seed, &config)?;
        println!(
            "== {} seed {run_seed} (train {} rows, {} features, {} classes; built in {:?})",
            family.name,
            family.train.n_rows(),
            family.train.n_features(),
            family.train.n_classes(),
            started.elapsed()
        );

        let fit_started = std::time::Instant::now();
        let seed = detector_seed(run_seed, &family.name, "spectre");
        let detector = spectre_fit(
            &family.train,
            &family.standardizer,
            &SpectreConfig::default(),
            seed,
        )?;
        println!("fit in {:?}", fit_started.elapsed());
        println!(
            "k = {}, ranking = {:?}",
            detector.calibration.k,
            detector
                .calibration
                .ranking
                .iter()
                .map(|s| s.name())
                .collect::<Vec<_>>()
        );
        for cal in &detector.calibration.signals {
            println!(
                "  {:8} rho={:.4} flipped={} q1={:+.4} q99={:+.4}",
                cal.signal.name(),
                cal.rho,
                cal.flipped,
                cal.q1,
                cal.q99
            );
        }

        let score_started = std::time::Instant::now();
        let regular = detector.score(&family.regular.features.view())?;
        let regular_bundle = detector.extract_bundle(&family.regular.features.view())?;
        for set in &family.anomalies {
            let anomaly = detector.score(&set.features.view())?;
            let mut scores = regular.clone();
            scores.extend_from_slice(&anomaly);
            let mut labels = vec![0u8; regular.len()];
            labels.extend(std::iter::repeat_n(1u8, anomaly.len()));
            println!(
                "  spectre {} AUROC = {:.4}",
                set.variant,
                auroc(&scores, &labels)?
            );
            // Forced top-k fusion comparison.
            for k in [1usize, 2, 3] {
                let state = detector.calibration.clone().with_forced_k(k);
                let mut s = state.score_rows(&regular_bundle)?;
                let anomaly_bundle = detector.extract_bundle(&set.features.view())?;
                s.extend(state.score_rows(&anomaly_bundle)?);
                let mut l = vec![0u8; regular.len()];
                l.extend(std::iter::repeat_n(1u8, anomaly.len()));
                println!("    forced k={k}: {:.4}", auroc(&s, &l)?);
            }
            // Per-signal view: each signal scored alone through its frozen
            // calibration.
            let anomaly_bundle = detector.extract_bundle(&set.features.view())?;
            let mut line = String::new();
            for cal in &detector.calibration.signals {
                let raw_reg: Vec<f64> = regular_bundle.column(cal.signal).unwrap().to_vec();
                let raw_anom: Vec<f64> = anomaly_bundle.column(cal.signal).unwrap().to_vec();
                let mut s = cal.apply(&raw_reg);
                s.extend(cal.apply(&raw_anom));
                let mut l = vec![0u8; raw_reg.len()];
                l.extend(std::iter::repeat_n(1u8, raw_anom.len()));
                line.push_str(&format!("{}={:.3} ", cal.signal.name(), auroc(&s, &l)?));
            }
            println!("    per-signal: {line}");
        }
        println!("scored in {:?}", score_started.elapsed());

        for kind in ["mahalanobis", "usd", "deep_ensembles"] {
            let kind = spectre_core::harness::DetectorKind::parse(kind).unwrap();
            let det_seed = detector_seed(run_seed, &family.name, kind.name());
            let det = spectre_core::harness::runner::fit_detector(kind, &family, det_seed)?;
            let regular = det.score(&family.regular.features.view(), 1)?;
            for set in &family.anomalies {
                let anomaly = det.score(&set.features.view(), 2)?;
                let mut scores = regular.clone();
                scores.extend_from_slice(&anomaly);
                let mut labels = vec![0u8; regular.len()];
                labels.extend(std::iter::repeat_n(1u8, anomaly.len()));
                println!(
                    "  {} {} AUROC = {:.4}",
                    kind.name(),
                    set.variant,
                    auroc(&scores, &labels)?
                );
            }
        }
    }
    Ok(())
}
