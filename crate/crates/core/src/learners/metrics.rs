use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "1-macro-f1")]
    OneMinusMacroF1,
    #[serde(rename = "mse")]
    Mse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorScore {
    pub value: f64,
    pub metric: Metric,
}

/// Mean of per-class F1 over all `n_classes` classes. Any 0/0 on the way
/// makes that class's F1 zero.
pub fn macro_f1(pred: &[usize], truth: &[usize], n_classes: usize) -> Result<f64> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::InvalidInput(format!(
            "macro-F1 needs equal non-empty inputs, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    if n_classes == 0 {
        return Err(Error::InvalidInput("macro-F1 over zero classes".into()));
    }
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fn_ = vec![0usize; n_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p >= n_classes || t >= n_classes {
            return Err(Error::InvalidInput(format!("class id out of range ({p}, {t})")));
        }
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let sum: f64 = (0..n_classes)
        .map(|c| {
            if tp[c] == 0 {
                // Either precision or recall is 0 or 0/0: F1 is 0.
                return 0.0;
            }
            let precision = tp[c] as f64 / (tp[c] + fp[c]) as f64;
            let recall = tp[c] as f64 / (tp[c] + fn_[c]) as f64;
            2.0 * precision * recall / (precision + recall)
        })
        .sum();
    Ok(sum / n_classes as f64)
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::InvalidInput(format!(
            "MSE needs equal non-empty inputs, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

/// `1 - MSE / var(truth)` with the population variance.
pub fn r2(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if truth.len() < 2 {
        return Err(Error::InvalidInput("R² needs at least 2 values".into()));
    }
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let var = truth.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
    if var == 0.0 {
        return Err(Error::InvalidInput("R² undefined for zero-variance truth".into()));
    }
    Ok(1.0 - mse(pred, truth)? / var)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction() {
        let t = [0, 1, 2, 2, 1];
        assert_eq!(macro_f1(&t, &t, 3).unwrap(), 1.0);
    }

    #[test]
    fn half_right_two_classes() {
        assert_eq!(macro_f1(&[0, 1, 0, 1], &[0, 0, 1, 1], 2).unwrap(), 0.5);
    }

    #[test]
    fn never_predicted_class_scores_zero() {
        // class 2: TP = 0, FP = 0, FN = 1
        let f1 = macro_f1(&[0, 1, 1], &[0, 1, 2], 3).unwrap();
        let class1 = 2.0 * 0.5 * 1.0 / 1.5;
        assert!((f1 - (1.0 + class1) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn absent_class_counts_in_the_mean() {
        assert_eq!(macro_f1(&[0, 0], &[0, 0], 2).unwrap(), 0.5);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(macro_f1(&[], &[], 2).is_err());
        assert!(mse(&[], &[]).is_err());
    }

    #[test]
    fn regression_metrics() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(r2(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(mse(&[1.0, 1.0], &[0.0, 2.0]).unwrap(), 1.0);
        assert_eq!(r2(&[1.0, 1.0], &[0.0, 2.0]).unwrap(), 0.0);
        assert_eq!(r2(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert!(r2(&[1.0, 1.0], &[3.0, 3.0]).is_err());
    }
}
