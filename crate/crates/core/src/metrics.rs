//! Detection metrics with anomaly as the positive class.
//!
//! Labels are 0 for in-distribution rows and 1 for anomalies throughout.
//! Every metric here has a brute-force oracle in the test suite and the two
//! must agree exactly on small instances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use ndarray::ArrayView2;

/// One evaluation row: (detector, dataset, anomaly variant, seed) plus the
/// four metrics. `conf_err` is absent when the detector emits no class
/// probabilities or no prediction clears the confidence bar.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalRecord {
    pub detector: String,
    pub dataset: String,
    pub variant: String,
    pub seed: u64,
    pub auroc: f64,
    pub aupr: f64,
    pub fpr95: f64,
    pub conf_err: Option<f64>,
}

fn check_binary(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("non-finite score"));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.len() - positives;
    Ok((positives, negatives))
}

/// Rank-based AUROC (Mann-Whitney) with half credit for ties. Equal to the
/// fraction of concordant (anomaly, in-distribution) pairs.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (positives, negatives) = check_binary(scores, labels)?;
    if positives == 0 || negatives == 0 {
        return Err(Error::invalid(
            "auroc needs both classes present in the labels",
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite"));

    // Average ranks over tie groups, then the Mann-Whitney U statistic.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share the average rank.
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let np = positives as f64;
    let nn = negatives as f64;
    let u = rank_sum_pos - np * (np + 1.0) / 2.0;
    Ok(u / (np * nn))
}

/// Step-interpolated area under the precision-recall curve: thresholds sweep
/// the distinct score values in descending order and each recall increment
/// contributes at the precision reached there (no linear interpolation).
pub fn aupr(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (positives, _) = check_binary(scores, labels)?;
    if positives == 0 {
        return Err(Error::invalid("aupr needs at least one positive"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite"));

    let np = positives as f64;
    let mut area = 0.0;
    let mut tp = 0usize;
    let mut flagged = 0usize;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            flagged += 1;
            if labels[idx] == 1 {
                tp += 1;
            }
        }
        let recall = tp as f64 / np;
        let precision = tp as f64 / flagged as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    Ok(area)
}

/// False-positive rate at (at least) 95% true-positive rate: the threshold is
/// the largest score value flagging >= 95% of anomalies (flag = score >=
/// threshold), with no interpolation.
pub fn fpr95(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (positives, negatives) = check_binary(scores, labels)?;
    if positives == 0 || negatives == 0 {
        return Err(Error::invalid(
            "fpr95 needs both classes present in the labels",
        ));
    }
    let mut pos_scores: Vec<f64> = scores
        .iter()
        .zip(labels.iter())
        .filter(|(_, &l)| l == 1)
        .map(|(&s, _)| s)
        .collect();
    pos_scores.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    // k = ceil(0.95 * positives) computed exactly in integers (0.95 = 19/20).
    let k = (19 * positives).div_ceil(20);
    let threshold = pos_scores[k - 1];
    let false_flags = scores
        .iter()
        .zip(labels.iter())
        .filter(|(&s, &l)| l == 0 && s >= threshold)
        .count();
    Ok(false_flags as f64 / negatives as f64)
}

/// Error rate among predictions whose maximum class probability exceeds 0.9.
/// Returns `None` when no prediction is that confident.
pub fn conf_err(probabilities: &ArrayView2<f64>, labels: &[usize]) -> Result<Option<f64>> {
    if probabilities.nrows() != labels.len() {
        return Err(Error::invalid("probability rows and labels differ"));
    }
    let mut confident = 0usize;
    let mut wrong = 0usize;
    for (row, &label) in probabilities.rows().into_iter().zip(labels.iter()) {
        let sum: f64 = row.sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "probability row sums to {sum}, not 1"
            )));
        }
        let (pred, max) = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite"))
            .map(|(i, &v)| (i, v))
            .expect("nonempty row");
        if max > 0.9 {
            confident += 1;
            if pred != label {
                wrong += 1;
            }
        }
    }
    if confident == 0 {
        Ok(None)
    } else {
        Ok(Some(wrong as f64 / confident as f64))
    }
}

/// Mean and population standard deviation of a sample (used for the
/// mean±std aggregation across seeds).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Renders a `mean±std` cell in the summary-table format.
pub fn format_mean_std(values: &[f64]) -> String {
    let (m, s) = mean_std(values);
    format!("{m:.4}±{s:.4}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    /// Brute-force AUROC: all (positive, negative) pairs, half credit on ties.
    fn auroc_oracle(scores: &[f64], labels: &[u8]) -> f64 {
        let pos: Vec<f64> = scores
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == 1)
            .map(|(&s, _)| s)
            .collect();
        let neg: Vec<f64> = scores
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == 0)
            .map(|(&s, _)| s)
            .collect();
        let mut credit = 0.0;
        for &p in &pos {
            for &n in &neg {
                if p > n {
                    credit += 1.0;
                } else if p == n {
                    credit += 0.5;
                }
            }
        }
        credit / (pos.len() as f64 * neg.len() as f64)
    }

    /// Brute-force AUPR: enumerate distinct thresholds in descending order,
    /// recount the confusion table at each, accumulate step areas.
    fn aupr_oracle(scores: &[f64], labels: &[u8]) -> f64 {
        let mut thresholds: Vec<f64> = scores.to_vec();
        thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
        thresholds.dedup();
        let np = labels.iter().filter(|&&l| l == 1).count() as f64;
        let mut area = 0.0;
        let mut prev_recall = 0.0;
        for &t in &thresholds {
            let mut tp = 0usize;
            let mut flagged = 0usize;
            for (&s, &l) in scores.iter().zip(labels) {
                if s >= t {
                    flagged += 1;
                    if l == 1 {
                        tp += 1;
                    }
                }
            }
            let recall = tp as f64 / np;
            let precision = tp as f64 / flagged as f64;
            area += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
        area
    }

    /// Brute-force FPR95: sweep candidate thresholds (the score values),
    /// keep the largest with TPR >= 0.95, recount false flags.
    fn fpr95_oracle(scores: &[f64], labels: &[u8]) -> f64 {
        let np = labels.iter().filter(|&&l| l == 1).count();
        let nn = labels.len() - np;
        let mut best_threshold = f64::NEG_INFINITY;
        let mut candidates: Vec<f64> = scores.to_vec();
        candidates.sort_by(|a, b| b.partial_cmp(a).unwrap());
        candidates.dedup();
        for &t in &candidates {
            let tp = scores
                .iter()
                .zip(labels)
                .filter(|(&s, &l)| l == 1 && s >= t)
                .count();
            // ceil(0.95 * np) as exact integer arithmetic
            if 20 * tp >= 19 * np {
                best_threshold = t;
                break;
            }
        }
        let fp = scores
            .iter()
            .zip(labels)
            .filter(|(&s, &l)| l == 0 && s >= best_threshold)
            .count();
        fp as f64 / nn as f64
    }

    #[test]
    fn auroc_trivial_cases() {
        let perfect = auroc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap();
        assert_abs_diff_eq!(perfect, 1.0);
        let ties = auroc(&[0.5, 0.5, 0.5, 0.5], &[0, 0, 1, 1]).unwrap();
        assert_abs_diff_eq!(ties, 0.5);
    }

    #[test]
    fn auroc_worked_example() {
        // 3 of 4 (pos, neg) pairs concordant.
        let value = auroc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap();
        assert_abs_diff_eq!(value, 0.75);
    }

    #[test]
    fn auroc_refuses_single_class() {
        assert!(auroc(&[0.1, 0.2], &[1, 1]).is_err());
    }

    #[test]
    fn aupr_trivial_and_worked_cases() {
        let perfect = aupr(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap();
        assert_abs_diff_eq!(perfect, 1.0);
        // Thresholds: precision 1 at recall 1/2, then 2/3 at recall 1.
        let value = aupr(&[0.9, 0.8, 0.7], &[1, 0, 1]).unwrap();
        assert_abs_diff_eq!(value, 5.0 / 6.0, epsilon = 1e-15);
        assert!(aupr(&[0.1, 0.2], &[0, 0]).is_err());
    }

    #[test]
    fn aupr_approaches_positive_rate_on_random_scores() {
        // Monte Carlo oracle: with uninformative scores AUPR ~ positive rate.
        let mut rng = crate::seeding::rng_from_seed(99);
        let n = 10_000;
        let p = 0.3;
        let mut scores = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            scores.push(rng.random::<f64>());
            labels.push(u8::from(rng.random::<f64>() < p));
        }
        let value = aupr(&scores, &labels).unwrap();
        assert!((value - p).abs() < 0.05, "aupr = {value}");
    }

    #[test]
    fn fpr95_trivial_cases() {
        let perfect = fpr95(&[0.0, 0.1, 0.9, 1.0], &[0, 0, 1, 1]).unwrap();
        assert_abs_diff_eq!(perfect, 0.0);
    }

    #[test]
    fn fpr95_identical_distributions() {
        let mut rng = crate::seeding::rng_from_seed(7);
        let n = 20_000;
        let mut scores = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            scores.push(rng.random::<f64>());
            labels.push(u8::from(i % 2 == 0));
        }
        let value = fpr95(&scores, &labels).unwrap();
        assert!((value - 0.95).abs() < 0.02, "fpr95 = {value}");
    }

    #[test]
    fn fpr95_exhaustive_20_anomaly_case() {
        // 20 anomalies at distinct scores; ceil(0.95 * 20) = 19 of them must
        // be flagged, so the threshold is the 19th largest anomaly score.
        let mut scores: Vec<f64> = (0..20).map(|i| 10.0 + i as f64).collect();
        let mut labels = vec![1u8; 20];
        for i in 0..20 {
            scores.push(9.0 + i as f64); // negatives interleaved below
            labels.push(0);
        }
        let got = fpr95(&scores, &labels).unwrap();
        let oracle = fpr95_oracle(&scores, &labels);
        assert_eq!(got, oracle);
        // Threshold is 11.0 (19th largest anomaly score); negatives >= 11
        // are those at 11..=28 -> 18 of 20.
        assert_abs_diff_eq!(got, 18.0 / 20.0);
    }

    #[test]
    fn conf_err_cases() {
        let probs = array![[0.95, 0.05], [0.99, 0.01]];
        let value = conf_err(&probs.view(), &[0, 1]).unwrap();
        assert_abs_diff_eq!(value.unwrap(), 0.5);

        let all_right = array![[0.95, 0.05], [0.04, 0.96]];
        assert_abs_diff_eq!(conf_err(&all_right.view(), &[0, 1]).unwrap().unwrap(), 0.0);

        // Uniform probabilities: nothing clears the 0.9 bar.
        let uniform = array![[0.5, 0.5], [0.5, 0.5]];
        assert_eq!(conf_err(&uniform.view(), &[0, 1]).unwrap(), None);

        let bad = array![[0.5, 0.4]];
        assert!(conf_err(&bad.view(), &[0]).is_err());
    }

    #[test]
    fn metrics_match_brute_force_oracles_exactly() {
        // 1000 random instances with n <= 200, ties made likely by score
        // quantization.
        let mut rng = crate::seeding::rng_from_seed(1234);
        for trial in 0..1000 {
            let n = 2 + (trial % 199);
            let quant = [1.0, 10.0, 100.0][trial % 3];
            let mut scores = Vec::with_capacity(n);
            let mut labels: Vec<u8> = Vec::with_capacity(n);
            for _ in 0..n {
                scores.push((rng.random::<f64>() * quant).round() / quant);
                labels.push(u8::from(rng.random::<f64>() < 0.4));
            }
            // Force both classes present.
            labels[0] = 0;
            labels[n - 1] = 1;

            let got = auroc(&scores, &labels).unwrap();
            let want = auroc_oracle(&scores, &labels);
            assert_eq!(got, want, "auroc trial {trial}");

            let got = aupr(&scores, &labels).unwrap();
            let want = aupr_oracle(&scores, &labels);
            assert_eq!(got, want, "aupr trial {trial}");

            let got = fpr95(&scores, &labels).unwrap();
            let want = fpr95_oracle(&scores, &labels);
            assert_eq!(got, want, "fpr95 trial {trial}");
        }
    }

    proptest! {
        #[test]
        fn auroc_flip_identity(seed in 0u64..500) {
            // Tie-free scores: auroc(s) + auroc(-s) = 1.
            let mut rng = crate::seeding::rng_from_seed(seed);
            let n = 3 + (seed as usize % 60);
            let mut scores: Vec<f64> = Vec::new();
            let mut labels: Vec<u8> = Vec::new();
            for i in 0..n {
                scores.push(i as f64 + rng.random::<f64>() * 0.5);
                labels.push(u8::from(rng.random::<f64>() < 0.5));
            }
            labels[0] = 0;
            labels[n - 1] = 1;
            let fwd = auroc(&scores, &labels).unwrap();
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            let bwd = auroc(&neg, &labels).unwrap();
            prop_assert!((fwd + bwd - 1.0).abs() < 1e-12);
        }

        #[test]
        fn auroc_is_invariant_under_monotone_transforms(seed in 0u64..500) {
            let mut rng = crate::seeding::rng_from_seed(seed ^ 0xabcd);
            let n = 4 + (seed as usize % 50);
            let mut scores: Vec<f64> = Vec::new();
            let mut labels: Vec<u8> = Vec::new();
            for _ in 0..n {
                scores.push(rng.random::<f64>() * 4.0 - 2.0);
                labels.push(u8::from(rng.random::<f64>() < 0.5));
            }
            labels[0] = 0;
            labels[n - 1] = 1;
            let base = auroc(&scores, &labels).unwrap();
            let cubed: Vec<f64> = scores.iter().map(|s| s * s * s).collect();
            let affine: Vec<f64> = scores.iter().map(|s| 3.5 * s + 20.0).collect();
            prop_assert!((auroc(&cubed, &labels).unwrap() - base).abs() < 1e-12);
            prop_assert!((auroc(&affine, &labels).unwrap() - base).abs() < 1e-12);
        }
    }
}
