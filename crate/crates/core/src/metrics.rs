//! Evaluation metrics for regression scores and binary decisions.

use crate::error::{Error, Result};

fn check_pair(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::Data("metric of an empty prediction set".into()));
    }
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    Ok(())
}

/// Root mean squared error.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let s: f64 = pred.iter().zip(truth).map(|(p, y)| (y - p) * (y - p)).sum();
    Ok((s / pred.len() as f64).sqrt())
}

/// `|y - y_hat|_2 / |y|_2`.
pub fn relative_error(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let num: f64 = pred.iter().zip(truth).map(|(p, y)| (y - p) * (y - p)).sum();
    let den: f64 = truth.iter().map(|y| y * y).sum();
    if den == 0.0 {
        return Err(Error::Data("relative error against an all-zero target".into()));
    }
    Ok((num / den).sqrt())
}

/// Fraction of exactly matching labels.
pub fn accuracy(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let hits = pred.iter().zip(truth).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
/// Labels `> 0` are positive.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    check_pair(scores, labels)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Data("AUC of NaN scores".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let n_pos = labels.iter().filter(|&&y| y > 0.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Data("AUC needs both positive and negative labels".into()));
    }
    // sum of mid-ranks of the positives
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| labels[k] > 0.0).count() as f64;
        i = j + 1;
    }
    let np = n_pos as f64;
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let y = [1.0, -2.0, 3.5];
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
        assert_eq!(relative_error(&y, &y).unwrap(), 0.0);
        assert_eq!(accuracy(&y, &y).unwrap(), 1.0);
        assert_eq!(auc(&[0.1, 0.2, 0.9], &[-1.0, -1.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn auc_pair_count() {
        let a = auc(&[0.1, 0.4, 0.35, 0.8], &[-1.0, -1.0, 1.0, 1.0]).unwrap();
        assert_eq!(a, 0.75);
        assert_eq!(auc(&[0.5, 0.5], &[1.0, -1.0]).unwrap(), 0.5);
    }

    #[test]
    fn auc_matches_pair_enumeration() {
        let s = [0.3, 0.3, 0.1, 0.9, 0.3, 0.5, 0.1];
        let y = [1.0, -1.0, -1.0, 1.0, 1.0, -1.0, 1.0];
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if y[i] > 0.0 && y[j] < 0.0 {
                    den += 1.0;
                    num += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
                }
            }
        }
        assert!((auc(&s, &y).unwrap() - num / den).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(rmse(&[], &[]).is_err());
        assert!(auc(&[0.1, 0.2], &[1.0, 1.0]).is_err());
        assert!(accuracy(&[1.0], &[1.0, 1.0]).is_err());
        assert_eq!(rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 12.5f64.sqrt());
        assert_eq!(relative_error(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 1.0);
    }
}
