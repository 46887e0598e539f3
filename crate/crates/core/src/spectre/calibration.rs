//! Signal calibration: percentile normalization from validation rows,
//! direction correction against the pseudo-OOD set, validation-vs-pseudo-OOD
//! ranking, and adaptive top-k selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::quantile_of;
use crate::metrics::auroc;
use crate::signals::{SignalBundle, SignalId};

/// Signals whose direction is fixed by construction rather than by the
/// automatic mean comparison: the perturbation-confidence score is always
/// negated (lower confidence means more anomalous) and the in-vs-noise
/// probability is never negated (it already points at anomalies).
fn direction_override(signal: SignalId) -> Option<bool> {
    match signal {
        SignalId::Odin => Some(true),
        SignalId::Usd => Some(false),
        _ => None,
    }
}

/// Threshold below which the normalization denominator counts as degenerate.
pub const DEGENERATE_SPAN: f64 = 1e-12;

/// Frozen per-signal calibration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignalCalibration {
    pub signal: SignalId,
    pub q1: f64,
    pub q99: f64,
    pub flipped: bool,
    /// Validation-vs-pseudo-OOD AUROC of the corrected signal; 0.5 for
    /// degenerate (constant) signals so they are never selected.
    pub rho: f64,
}

impl SignalCalibration {
    /// Affine map by the validation percentiles, clipped to [0, 3], then the
    /// direction flip. A degenerate span maps everything to 0.
    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        let span = self.q99 - self.q1;
        raw.iter()
            .map(|&v| {
                let normalized = if span.abs() < DEGENERATE_SPAN {
                    0.0
                } else {
                    ((v - self.q1) / span).clamp(0.0, 3.0)
                };
                if self.flipped {
                    -normalized
                } else {
                    normalized
                }
            })
            .collect()
    }
}

/// Frozen calibration for a full signal bundle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationState {
    pub signals: Vec<SignalCalibration>,
    /// Signal names sorted by rho descending, ties broken by canonical order.
    pub ranking: Vec<SignalId>,
    pub k: usize,
    pub tau: f64,
}

/// Maps raw values to [0, 3] by the validation percentiles (no direction
/// correction).
pub fn normalize_signal(raw: &[f64], q1: f64, q99: f64) -> Vec<f64> {
    SignalCalibration {
        signal: SignalId::Gauss,
        q1,
        q99,
        flipped: false,
        rho: 0.5,
    }
    .apply(raw)
}

/// Decides the direction flip for one signal from its normalized validation
/// and pseudo-OOD values: flip when the pseudo-OOD mean is below the
/// validation mean, subject to the fixed overrides.
pub fn correct_direction(
    signal: SignalId,
    normalized_val: &[f64],
    normalized_ood: &[f64],
) -> bool {
    if let Some(forced) = direction_override(signal) {
        return forced;
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    mean(normalized_ood) < mean(normalized_val)
}

/// Calibrates every signal in the bundles and selects the top-k: per signal,
/// percentiles from validation rows only, normalization, direction
/// correction, then rho = AUROC(val labeled 0, pseudo-OOD labeled 1) on the
/// corrected values. `k = 1` iff the best rho reaches `tau`, else 2 (a
/// single-signal bundle always gets k = 1).
pub fn calibrate(
    val_bundle: &SignalBundle,
    ood_bundle: &SignalBundle,
    tau: f64,
) -> Result<CalibrationState> {
    if val_bundle.signals.is_empty() {
        return Err(Error::invalid("calibration needs at least one signal"));
    }
    if val_bundle.signals != ood_bundle.signals {
        return Err(Error::invalid(
            "validation and pseudo-OOD bundles carry different signals",
        ));
    }
    let mut calibrations = Vec::with_capacity(val_bundle.signals.len());
    for (idx, &signal) in val_bundle.signals.iter().enumerate() {
        let raw_val: Vec<f64> = val_bundle.values.column(idx).to_vec();
        let raw_ood: Vec<f64> = ood_bundle.values.column(idx).to_vec();
        let q1 = quantile_of(&raw_val, 0.01);
        let q99 = quantile_of(&raw_val, 0.99);
        let degenerate = (q99 - q1).abs() < DEGENERATE_SPAN;

        let mut cal = SignalCalibration {
            signal,
            q1,
            q99,
            flipped: false,
            rho: 0.5,
        };
        let norm_val = cal.apply(&raw_val);
        let norm_ood = cal.apply(&raw_ood);
        cal.flipped = correct_direction(signal, &norm_val, &norm_ood);

        if degenerate {
            cal.rho = 0.5;
        } else {
            let corrected_val = cal.apply(&raw_val);
            let corrected_ood = cal.apply(&raw_ood);
            let mut scores = corrected_val;
            scores.extend_from_slice(&corrected_ood);
            let mut labels = vec![0u8; norm_val.len()];
            labels.extend(std::iter::repeat_n(1u8, norm_ood.len()));
            cal.rho = auroc(&scores, &labels)?;
        }
        calibrations.push(cal);
    }

    let canonical_index = |s: SignalId| {
        SignalId::CANONICAL
            .iter()
            .position(|c| *c == s)
            .expect("known signal")
    };
    let mut ranking: Vec<SignalId> = calibrations.iter().map(|c| c.signal).collect();
    ranking.sort_by(|&a, &b| {
        let rho_a = calibrations
            .iter()
            .find(|c| c.signal == a)
            .expect("present")
            .rho;
        let rho_b = calibrations
            .iter()
            .find(|c| c.signal == b)
            .expect("present")
            .rho;
        rho_b
            .partial_cmp(&rho_a)
            .expect("finite rho")
            .then(canonical_index(a).cmp(&canonical_index(b)))
    });

    let rho_max = calibrations
        .iter()
        .map(|c| c.rho)
        .fold(f64::NEG_INFINITY, f64::max);
    let k = if calibrations.len() == 1 || rho_max >= tau {
        1
    } else {
        2
    };

    Ok(CalibrationState {
        signals: calibrations,
        ranking,
        k,
        tau,
    })
}

impl CalibrationState {
    pub fn for_signal(&self, id: SignalId) -> Option<&SignalCalibration> {
        self.signals.iter().find(|c| c.signal == id)
    }

    /// Forces the fused count (used by the fixed-k ablation variant).
    pub fn with_forced_k(mut self, k: usize) -> Self {
        self.k = k.max(1).min(self.ranking.len());
        self
    }

    /// The top-k selected signals.
    pub fn selected(&self) -> &[SignalId] {
        &self.ranking[..self.k.min(self.ranking.len())]
    }

    /// Fused anomaly score per row: the mean of the top-k normalized,
    /// direction-corrected signals. Higher means more anomalous.
    pub fn score_rows(&self, bundle: &SignalBundle) -> Result<Vec<f64>> {
        let selected = self.selected();
        if selected.is_empty() {
            return Err(Error::invalid("calibration selected no signals"));
        }
        let n = bundle.n_rows();
        let mut totals = vec![0.0f64; n];
        for &id in selected {
            let cal = self
                .for_signal(id)
                .ok_or_else(|| Error::invalid(format!("no calibration for {}", id.name())))?;
            let raw: Vec<f64> = bundle
                .column(id)
                .ok_or_else(|| Error::invalid(format!("bundle lacks signal {}", id.name())))?
                .to_vec();
            let corrected = cal.apply(&raw);
            for (t, v) in totals.iter_mut().zip(corrected.iter()) {
                *t += v;
            }
        }
        let k = selected.len() as f64;
        Ok(totals.into_iter().map(|t| t / k).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn bundle_of(signals: Vec<SignalId>, columns: Vec<Vec<f64>>) -> SignalBundle {
        let n = columns[0].len();
        let mut values = Array2::<f64>::zeros((n, signals.len()));
        for (j, col) in columns.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                values[[i, j]] = *v;
            }
        }
        SignalBundle { signals, values }
    }

    #[test]
    fn normalization_maps_percentile_endpoints() {
        let raw: Vec<f64> = (0..101).map(|i| i as f64).collect();
        let q1 = quantile_of(&raw, 0.01);
        let q99 = quantile_of(&raw, 0.99);
        let normalized = normalize_signal(&[q1, q99, 1e9, -1e9], q1, q99);
        approx::assert_abs_diff_eq!(normalized[0], 0.0);
        approx::assert_abs_diff_eq!(normalized[1], 1.0);
        approx::assert_abs_diff_eq!(normalized[2], 3.0); // clipped far above
        approx::assert_abs_diff_eq!(normalized[3], 0.0);
    }

    #[test]
    fn degenerate_percentiles_map_to_zero() {
        let normalized = normalize_signal(&[5.0, 5.0, 5.0], 5.0, 5.0);
        assert!(normalized.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn direction_correction_cases() {
        // Already OOD-high: no flip.
        assert!(!correct_direction(
            SignalId::Gauss,
            &[0.0, 0.0, 0.0],
            &[1.0, 1.0, 1.0]
        ));
        // OOD-low: flip.
        assert!(correct_direction(SignalId::Gauss, &[1.0, 1.0], &[0.0, 0.0]));
        // Confidence score: always negated, even when the automatic rule
        // would say otherwise.
        assert!(correct_direction(SignalId::Odin, &[0.0, 0.0], &[1.0, 1.0]));
        // OOD probability: never negated.
        assert!(!correct_direction(SignalId::Usd, &[1.0, 1.0], &[0.0, 0.0]));
    }

    #[test]
    fn perfectly_separating_signal_gets_rho_one_and_k_one() {
        // Entropy separates upward (no clip ties: pseudo-OOD saturates at 3,
        // validation stays near [0, 1]); Energy overlaps completely.
        let val = bundle_of(
            vec![SignalId::Energy, SignalId::Entropy],
            vec![
                (0..100).map(|i| (i % 10) as f64).collect(),
                (0..100).map(|i| i as f64 / 100.0).collect(),
            ],
        );
        let ood = bundle_of(
            vec![SignalId::Energy, SignalId::Entropy],
            vec![
                (0..100).map(|i| (i % 10) as f64).collect(),
                (0..100).map(|i| 50.0 + i as f64).collect(),
            ],
        );
        let state = calibrate(&val, &ood, 0.72).unwrap();
        let entropy = state.for_signal(SignalId::Entropy).unwrap();
        assert!(!entropy.flipped);
        approx::assert_abs_diff_eq!(entropy.rho, 1.0, epsilon = 1e-12);
        assert_eq!(state.k, 1);
        assert_eq!(state.ranking[0], SignalId::Entropy);
    }

    #[test]
    fn downward_separating_signal_is_flipped_and_ranks_high() {
        // A likelihood-style signal that drops on pseudo-OOD: flipped, and
        // near-perfect rho (the clip at 0 ties the bottom percentile of
        // validation with the saturated pseudo-OOD values).
        let val = bundle_of(
            vec![SignalId::Gauss],
            vec![(0..100).map(|i| -(i as f64) / 100.0).collect()],
        );
        let ood = bundle_of(
            vec![SignalId::Gauss],
            vec![(0..100).map(|i| -10.0 - (i as f64)).collect()],
        );
        let state = calibrate(&val, &ood, 0.72).unwrap();
        let gauss = state.for_signal(SignalId::Gauss).unwrap();
        assert!(gauss.flipped);
        assert!(gauss.rho > 0.99, "rho = {}", gauss.rho);
    }

    #[test]
    fn weak_signals_select_k_two() {
        // Both signals overlap heavily; rho stays below the threshold.
        let val_col: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin()).collect();
        let ood_col: Vec<f64> = (0..200).map(|i| (i as f64 * 0.41 + 0.2).sin() * 1.05).collect();
        let val = bundle_of(
            vec![SignalId::Gauss, SignalId::Energy],
            vec![val_col.clone(), val_col],
        );
        let ood = bundle_of(
            vec![SignalId::Gauss, SignalId::Energy],
            vec![ood_col.clone(), ood_col],
        );
        let state = calibrate(&val, &ood, 0.72).unwrap();
        assert!(state.signals.iter().all(|c| c.rho < 0.72), "{state:?}");
        assert_eq!(state.k, 2);
    }

    #[test]
    fn rho_ties_break_by_canonical_order() {
        // Identical columns: identical rho; ranking must follow canonical
        // order (Gauss before Energy before USD).
        let col: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let ood_col: Vec<f64> = (0..50).map(|i| i as f64 + 100.0).collect();
        let val = bundle_of(
            vec![SignalId::Energy, SignalId::Usd, SignalId::Gauss],
            vec![col.clone(), col.clone(), col.clone()],
        );
        let ood = bundle_of(
            vec![SignalId::Energy, SignalId::Usd, SignalId::Gauss],
            vec![ood_col.clone(), ood_col.clone(), ood_col],
        );
        let state = calibrate(&val, &ood, 0.72).unwrap();
        assert_eq!(
            state.ranking,
            vec![SignalId::Gauss, SignalId::Energy, SignalId::Usd]
        );
    }

    #[test]
    fn degenerate_signal_gets_rho_half_and_is_never_selected() {
        let constant = vec![2.5; 60];
        let varying: Vec<f64> = (0..60).map(|i| i as f64).collect();
        let varying_ood: Vec<f64> = (0..60).map(|i| i as f64 + 500.0).collect();
        let val = bundle_of(
            vec![SignalId::Gauss, SignalId::Entropy],
            vec![constant.clone(), varying],
        );
        let ood = bundle_of(
            vec![SignalId::Gauss, SignalId::Entropy],
            vec![constant, varying_ood],
        );
        let state = calibrate(&val, &ood, 0.72).unwrap();
        let gauss = state.for_signal(SignalId::Gauss).unwrap();
        approx::assert_abs_diff_eq!(gauss.rho, 0.5);
        assert_eq!(state.ranking[0], SignalId::Entropy);
        assert_eq!(state.k, 1);
    }

    #[test]
    fn top_k_scoring_averages_selected_signals() {
        // Two signals, forced k = 2, with known normalized values.
        let val = bundle_of(
            vec![SignalId::Gauss, SignalId::Energy],
            vec![
                (0..101).map(|i| i as f64 / 100.0).collect(),
                (0..101).map(|i| i as f64 / 100.0).collect(),
            ],
        );
        let ood = bundle_of(
            vec![SignalId::Gauss, SignalId::Energy],
            vec![vec![2.0; 50], vec![2.0; 50]],
        );
        let state = calibrate(&val, &ood, 0.72).unwrap().with_forced_k(2);
        // Build a test bundle whose normalized values are 1.0 and 2.0.
        let g = state.for_signal(SignalId::Gauss).unwrap();
        let e = state.for_signal(SignalId::Energy).unwrap();
        let raw_g = g.q1 + (g.q99 - g.q1) * 1.0;
        let raw_e = e.q1 + (e.q99 - e.q1) * 2.0;
        let test = bundle_of(
            vec![SignalId::Gauss, SignalId::Energy],
            vec![vec![raw_g], vec![raw_e]],
        );
        let scores = state.score_rows(&test).unwrap();
        approx::assert_abs_diff_eq!(scores[0], 1.5, epsilon = 1e-12);

        // k = 1: the fused score equals the top signal's normalized value.
        let state = state.with_forced_k(1);
        let top = state.ranking[0];
        let scores = state.score_rows(&test).unwrap();
        let cal = state.for_signal(top).unwrap();
        let raw = test.column(top).unwrap()[0];
        approx::assert_abs_diff_eq!(scores[0], cal.apply(&[raw])[0], epsilon = 1e-12);
    }

    #[test]
    fn corrected_ood_mean_dominates_val_mean_for_automatic_signals() {
        // After direction correction the pseudo-OOD mean must be >= the
        // validation mean for every non-overridden signal.
        let val = bundle_of(
            vec![SignalId::Gauss, SignalId::Entropy],
            vec![
                (0..80).map(|i| (i as f64).cos() * 2.0).collect(),
                (0..80).map(|i| 5.0 - i as f64 * 0.01).collect(),
            ],
        );
        let ood = bundle_of(
            vec![SignalId::Gauss, SignalId::Entropy],
            vec![
                (0..80).map(|i| (i as f64).cos() * 2.0 - 4.0).collect(),
                (0..80).map(|i| 5.5 + i as f64 * 0.01).collect(),
            ],
        );
        let state = calibrate(&val, &ood, 0.72).unwrap();
        for (idx, cal) in state.signals.iter().enumerate() {
            let corrected_val = cal.apply(&val.values.column(idx).to_vec());
            let corrected_ood = cal.apply(&ood.values.column(idx).to_vec());
            let mv = corrected_val.iter().sum::<f64>() / corrected_val.len() as f64;
            let mo = corrected_ood.iter().sum::<f64>() / corrected_ood.len() as f64;
            assert!(mo >= mv - 1e-12, "{:?}: ood {mo} < val {mv}", cal.signal);
        }
    }

    #[test]
    fn k1_scores_preserve_raw_ranking_inside_the_clip_window() {
        // Monotonicity: with k = 1, ranking test points by the fused score
        // matches ranking by the direction-corrected raw top signal for
        // points strictly inside the unclipped image of (q1, q99).
        let val = bundle_of(
            vec![SignalId::Gauss],
            vec![(0..200).map(|i| i as f64 * 0.01).collect()],
        );
        let ood = bundle_of(vec![SignalId::Gauss], vec![vec![50.0; 100]]);
        let state = calibrate(&val, &ood, 0.72).unwrap();
        assert_eq!(state.k, 1);
        let cal = state.for_signal(SignalId::Gauss).unwrap();
        let interior: Vec<f64> = (0..50)
            .map(|i| cal.q1 + (cal.q99 - cal.q1) * (0.01 + 0.98 * i as f64 / 49.0))
            .collect();
        let test = bundle_of(vec![SignalId::Gauss], vec![interior.clone()]);
        let scores = state.score_rows(&test).unwrap();
        let mut by_score: Vec<usize> = (0..50).collect();
        by_score.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
        let corrected_raw: Vec<f64> = interior.iter().map(|&r| {
            let v = cal.apply(&[r])[0];
            v
        }).collect();
        let mut by_raw: Vec<usize> = (0..50).collect();
        by_raw.sort_by(|&a, &b| corrected_raw[a].partial_cmp(&corrected_raw[b]).unwrap());
        assert_eq!(by_score, by_raw);
    }
}
