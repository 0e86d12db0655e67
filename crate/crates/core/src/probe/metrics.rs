use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const EPS: f64 = 1e-15;

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Probe(format!("length mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// Coefficient of determination against the mean of `y_true`.
///
/// A constant `y_true` scores 1 when predicted exactly and 0 otherwise.
pub fn metric_r2(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    same_len(y_true.len(), y_pred.len())?;
    if y_true.len() < 2 {
        return Err(Error::Probe("r2 needs at least 2 rows".into()));
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let sse: f64 = y_true.iter().zip(y_pred).map(|(t, p)| (t - p) * (t - p)).sum();
    let sst: f64 = y_true.iter().map(|t| (t - mean) * (t - mean)).sum();
    if sst == 0.0 {
        return Ok(if sse > 0.0 { 0.0 } else { 1.0 });
    }
    Ok(1.0 - sse / sst)
}

/// Rank-based AUC with mid-ranks for ties.
pub fn metric_auc(y_true: &[f64], scores: &[f64]) -> Result<f64> {
    same_len(y_true.len(), scores.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Probe("auc scores contain NaN".into()));
    }
    let n_pos = y_true.iter().filter(|&&y| y == 1.0).count();
    let n_neg = y_true.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Probe("auc needs both classes".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * idx[i..=j].iter().filter(|&&r| y_true[r] == 1.0).count() as f64;
        i = j + 1;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

pub fn metric_accuracy(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    same_len(y_true.len(), y_pred.len())?;
    if y_true.is_empty() {
        return Err(Error::Probe("accuracy of no rows".into()));
    }
    let hits = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y_true.len() as f64)
}

pub fn metric_mae(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    same_len(y_true.len(), y_pred.len())?;
    if y_true.is_empty() {
        return Err(Error::Probe("mae of no rows".into()));
    }
    Ok(y_true.iter().zip(y_pred).map(|(t, p)| (t - p).abs()).sum::<f64>() / y_true.len() as f64)
}

/// Mean negative log-likelihood of class-index labels under `probs`.
pub fn metric_logloss(y_true: &[f64], probs: &[Vec<f64>]) -> Result<f64> {
    same_len(y_true.len(), probs.len())?;
    if y_true.is_empty() {
        return Err(Error::Probe("logloss of no rows".into()));
    }
    let total: f64 = y_true
        .iter()
        .zip(probs)
        .map(|(&y, p)| -p[y as usize].clamp(EPS, 1.0).ln())
        .sum();
    Ok(total / y_true.len() as f64)
}

/// Index of the largest probability; ties go to the lower class.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub logloss: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r2_cases() {
        assert_eq!(metric_r2(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(metric_r2(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert_eq!(metric_r2(&[1.0, 2.0, 3.0], &[1.0, 2.0, 2.0]).unwrap(), 0.5);
        assert_eq!(metric_r2(&[4.0, 4.0], &[4.0, 4.0]).unwrap(), 1.0);
        assert_eq!(metric_r2(&[4.0, 4.0], &[4.0, 5.0]).unwrap(), 0.0);
        assert!(metric_r2(&[1.0], &[1.0, 2.0]).is_err());
        let y = [0.1, 0.7, 0.3, 1.9, 2.2];
        let m = y.iter().sum::<f64>() / 5.0;
        assert_eq!(metric_r2(&y, &[m; 5]).unwrap(), 0.0);
    }

    #[test]
    fn auc_cases() {
        assert_eq!(metric_auc(&[0.0, 1.0, 1.0, 0.0], &[0.1, 0.9, 0.8, 0.4]).unwrap(), 1.0);
        assert_eq!(metric_auc(&[0.0, 1.0, 1.0, 0.0], &[0.3; 4]).unwrap(), 0.5);
        assert_eq!(metric_auc(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(metric_auc(&[1.0, 1.0], &[0.0, 1.0]).is_err());
        // Monotone transforms leave the AUC unchanged.
        let y = [0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
        let s = [0.2, 0.5, 0.5, 0.9, 0.1, 0.3];
        let t: Vec<f64> = s.iter().map(|v: &f64| v.exp() * 3.0 - 1.0).collect();
        assert_eq!(metric_auc(&y, &s).unwrap(), metric_auc(&y, &t).unwrap());
    }

    #[test]
    fn other_metrics() {
        assert_eq!(metric_accuracy(&[0.0, 1.0, 2.0], &[0.0, 1.0, 1.0]).unwrap(), 2.0 / 3.0);
        assert_eq!(metric_mae(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
        let ll = metric_logloss(&[1.0], &[vec![0.5, 0.5]]).unwrap();
        assert!((ll - 2f64.ln()).abs() < 1e-15);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }
}
