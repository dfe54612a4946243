//! Threshold-free ranking metrics and summary statistics.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Area under the ROC curve via the Mann–Whitney statistic.
///
/// Equals `P(score_anomalous > score_normal) + ½ P(equal)`; tied scores get
/// their midrank. Labels are 1 for anomalous (positive) and 0 for normal.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            op: "auc",
            expected: (labels.len(), 1),
            found: (scores.len(), 1),
        });
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::InvalidParameter(alloc::format!("score {i} is NaN")));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Ranks are doubled so midranks of tie groups stay integral.
    let mut doubled_rank_sum: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1 ..= end; twice their mean is start + end + 1.
        let doubled_midrank = (start + end + 1) as u64;
        let positives = order[start..end].iter().filter(|&&i| labels[i] == 1).count() as u64;
        doubled_rank_sum += doubled_midrank * positives;
        start = end;
    }
    let doubled_u = doubled_rank_sum - n_pos * (n_pos + 1);
    Ok(doubled_u as f64 / (2 * n_pos * n_neg) as f64)
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample (n − 1) standard deviation; 0 for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    libm::sqrt(ss / (values.len() - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation() {
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[0, 0, 1, 1]).unwrap(), 0.0);
    }

    #[test]
    fn all_ties_give_half() {
        assert_eq!(auc(&[0.3; 7], &[1, 0, 0, 1, 0, 0, 0]).unwrap(), 0.5);
    }

    #[test]
    fn partial_ties() {
        // pairs (pos, neg): (0.5,0.5)=½, (0.5,0.1)=1, (0.7,0.5)=1, (0.7,0.1)=1
        let a = auc(&[0.5, 0.7, 0.5, 0.1], &[1, 1, 0, 0]).unwrap();
        assert_eq!(a, 3.5 / 4.0);
    }

    #[test]
    fn errors() {
        assert_eq!(auc(&[0.1, 0.2], &[1, 1]), Err(Error::SingleClass));
        assert!(auc(&[0.1], &[1, 0]).is_err());
        assert!(auc(&[f64::NAN, 0.2], &[1, 0]).is_err());
    }

    #[test]
    fn summary_stats() {
        assert_eq!(sample_std(&[0.7]), 0.0);
        assert_eq!(mean(&[0.7]), 0.7);
        assert!((sample_std(&[1.0, 2.0, 3.0, 4.0]) - 1.2909944487358056).abs() < 1e-15);
    }
}
