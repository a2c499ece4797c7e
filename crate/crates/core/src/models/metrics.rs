use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hold-out metrics on the DFL points scale plus cross-validation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    /// `None` when the evaluation targets have zero variance.
    pub test_r2: Option<f64>,
    pub cv_r2_mean: Option<f64>,
    pub cv_r2_std: Option<f64>,
    #[serde(default)]
    pub cv_fold_r2: Vec<Option<f64>>,
}

/// Coefficient of determination against the targets' own mean.
pub fn r_squared(targets: &[f64], predictions: &[f64]) -> Option<f64> {
    if targets.is_empty() {
        return None;
    }
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let sst: f64 = targets.iter().map(|t| (t - mean).powi(2)).sum();
    if sst <= 1e-20 * n * (1.0 + mean * mean) {
        return None;
    }
    let sse: f64 = targets.iter().zip(predictions).map(|(t, p)| (t - p).powi(2)).sum();
    Some(1.0 - sse / sst)
}

pub fn evaluate(targets: &[f64], predictions: &[f64]) -> Result<EvaluationReport> {
    if targets.is_empty() {
        return Err(Error::InvalidInput("cannot evaluate on an empty set".into()));
    }
    if targets.len() != predictions.len() {
        return Err(Error::InvalidInput("targets and predictions differ in length".into()));
    }
    let n = targets.len() as f64;
    let mse = targets.iter().zip(predictions).map(|(t, p)| (t - p).powi(2)).sum::<f64>() / n;
    let mae = targets.iter().zip(predictions).map(|(t, p)| (t - p).abs()).sum::<f64>() / n;
    Ok(EvaluationReport {
        mse,
        rmse: mse.sqrt(),
        mae,
        test_r2: r_squared(targets, predictions),
        cv_r2_mean: None,
        cv_r2_std: None,
        cv_fold_r2: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let y = [1.0, 2.0, 4.0];
        let r = evaluate(&y, &y).unwrap();
        assert_eq!((r.mse, r.rmse, r.mae, r.test_r2), (0.0, 0.0, 0.0, Some(1.0)));
    }

    #[test]
    fn symmetric_unit_residuals() {
        let r = evaluate(&[0.0, 0.0], &[1.0, -1.0]).unwrap();
        assert_eq!((r.mse, r.mae, r.rmse), (1.0, 1.0, 1.0));
        assert_eq!(r.test_r2, None);
    }

    #[test]
    fn table_pair_consistent() {
        assert_eq!(format!("{:.2}", 2.04f64.sqrt()), "1.43");
    }

    #[test]
    fn constant_targets_have_no_r2() {
        assert_eq!(r_squared(&[0.1, 0.1, 0.1], &[0.0, 0.2, 0.1]), None);
    }
}
