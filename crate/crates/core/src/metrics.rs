//! Ranking metrics for detection scores.

use crate::error::{Error, Result};

/// Area under the ROC curve, Mann-Whitney formulation.
///
/// Equals the probability that a random positive outscores a random
/// negative, with ties counting one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::MetricUndefined(
            "AUC needs both detections and non-detections".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    // Average ranks across tied scores, then the rank-sum identity.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j + 1) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Area under the precision-recall curve as average precision.
///
/// Thresholds sweep distinct score values descending; tied scores enter
/// together.
pub fn auprc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 {
        return Err(Error::MetricUndefined(
            "AUPRC needs at least one detection".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let mut tp_gain = 0usize;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                tp_gain += 1;
            }
            j += 1;
        }
        tp += tp_gain;
        seen += j - i;
        let precision = tp as f64 / seen as f64;
        ap += precision * tp_gain as f64 / pos as f64;
        i = j;
    }
    Ok(ap)
}

/// Percentage improvement of `auc_a` over the reference.
pub fn pct_improvement(auc_a: f64, auc_ref: f64) -> Result<f64> {
    if auc_ref <= 0.0 {
        return Err(Error::MetricUndefined(format!(
            "reference AUC must be positive, got {auc_ref}"
        )));
    }
    Ok((auc_a - auc_ref) / auc_ref * 100.0)
}

fn check_lengths(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Param(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::EmptyInput("no scores to rank".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Param("scores contain NaN".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn auc_trivial_cases() {
        let perfect = auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap();
        assert_relative_eq!(perfect, 1.0);
        let flat = auc(&[0.5; 6], &[true, false, true, false, false, true]).unwrap();
        assert_relative_eq!(flat, 0.5);
        let inverted = auc(&[0.9, 0.1], &[false, true]).unwrap();
        assert_relative_eq!(inverted, 0.0);
    }

    /// All positive-negative pairs, compared directly.
    fn auc_oracle(scores: &[f64], labels: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in 0..scores.len() {
            if !labels[i] {
                continue;
            }
            for j in 0..scores.len() {
                if labels[j] {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn auc_matches_pairwise_oracle() {
        let mut rng = crate::seed::rng_for(1101, "metrics-auc");
        for _ in 0..20 {
            // Coarse scores force plenty of ties.
            let scores: Vec<f64> = (0..50).map(|_| rng.gen_range(0..10) as f64 / 10.0).collect();
            let labels: Vec<bool> = (0..50).map(|_| rng.gen_bool(0.3)).collect();
            if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
                continue;
            }
            assert_relative_eq!(
                auc(&scores, &labels).unwrap(),
                auc_oracle(&scores, &labels),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn auprc_trivial_cases() {
        let perfect = auprc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap();
        assert_relative_eq!(perfect, 1.0);
        let n = 8;
        let mut scores: Vec<f64> = (0..n).map(|i| 1.0 - i as f64 / n as f64).collect();
        let mut labels = vec![false; n];
        labels[n - 1] = true;
        scores[n - 1] = 0.0;
        assert_relative_eq!(auprc(&scores, &labels).unwrap(), 1.0 / n as f64);
    }

    /// Precision at every distinct threshold, recall steps weighted.
    fn auprc_oracle(scores: &[f64], labels: &[bool]) -> f64 {
        let pos = labels.iter().filter(|&&l| l).count() as f64;
        let mut thresholds: Vec<f64> = scores.to_vec();
        thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
        thresholds.dedup();
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for t in thresholds {
            let tp = scores
                .iter()
                .zip(labels)
                .filter(|(s, &l)| **s >= t && l)
                .count() as f64;
            let kept = scores.iter().filter(|&&s| s >= t).count() as f64;
            let recall = tp / pos;
            ap += (recall - prev_recall) * (tp / kept);
            prev_recall = recall;
        }
        ap
    }

    #[test]
    fn auprc_matches_threshold_sweep_oracle() {
        let mut rng = crate::seed::rng_for(1102, "metrics-ap");
        for _ in 0..20 {
            let scores: Vec<f64> = (0..40).map(|_| rng.gen_range(0..8) as f64).collect();
            let labels: Vec<bool> = (0..40).map(|_| rng.gen_bool(0.25)).collect();
            if !labels.iter().any(|&l| l) {
                continue;
            }
            assert_relative_eq!(
                auprc(&scores, &labels).unwrap(),
                auprc_oracle(&scores, &labels),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn metrics_invariant_under_monotone_transforms() {
        let mut rng = crate::seed::rng_for(1103, "metrics-mono");
        let scores: Vec<f64> = (0..60).map(|_| rng.gen_range(0.0..1.0)).collect();
        let labels: Vec<bool> = (0..60).map(|_| rng.gen_bool(0.4)).collect();
        let squashed: Vec<f64> = scores.iter().map(|s| (5.0 * s).tanh() + 3.0).collect();
        assert_relative_eq!(
            auc(&scores, &labels).unwrap(),
            auc(&squashed, &labels).unwrap(),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            auprc(&scores, &labels).unwrap(),
            auprc(&squashed, &labels).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn one_class_inputs_are_rejected() {
        assert!(auc(&[0.1, 0.2], &[true, true]).is_err());
        assert!(auc(&[0.1, 0.2], &[false, false]).is_err());
        assert!(auprc(&[0.1, 0.2], &[false, false]).is_err());
        assert!(auprc(&[0.2], &[true]).is_ok());
        assert!(auc(&[], &[]).is_err());
        assert!(auc(&[0.5, f64::NAN], &[true, false]).is_err());
    }

    #[test]
    fn pct_improvement_formula() {
        assert_relative_eq!(pct_improvement(0.66, 0.60).unwrap(), 10.0, epsilon = 1e-12);
        assert_relative_eq!(pct_improvement(0.42, 0.42).unwrap(), 0.0);
        assert_relative_eq!(pct_improvement(0.54, 0.60).unwrap(), -10.0, epsilon = 1e-12);
        assert!(pct_improvement(0.5, 0.0).is_err());
    }
}
