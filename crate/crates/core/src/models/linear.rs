//! Ridge-stabilised least squares.
//!
//! The intercept is left unpenalised by centring features and target. The
//! centred normal equations are solved through a symmetric eigendecomposition
//! of the Gram matrix; eigen-directions at round-off level (exact
//! collinearity, as produced by full one-hot encoding) are dropped, which
//! yields the minimum-norm solution in those directions.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::FeatureMatrix;

pub const DEFAULT_RIDGE: f64 = 1e-8;

/// Relative eigenvalue cut-off for numerically null directions.
const NULL_EIGEN_RTOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Fit-set sample standard deviation of each feature column.
    pub feature_std: Vec<f64>,
    /// Fit-set sample standard deviation of the target.
    pub target_std: f64,
    pub ridge: f64,
}

impl LinearModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum::<f64>()
    }
}

fn sample_std(values: impl Iterator<Item = f64>, mean: f64, n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    (values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

pub fn fit_linear(x: &FeatureMatrix, y: &[f64], ridge: f64) -> Result<LinearModel> {
    if x.rows != y.len() {
        return Err(Error::InvalidInput(format!("{} feature rows but {} targets", x.rows, y.len())));
    }
    if x.rows == 0 {
        return Err(Error::InvalidInput("cannot fit a linear model on zero rows".into()));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidInput(format!("ridge must be a finite non-negative number (got {ridge})")));
    }
    if x.data.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in linear fit inputs".into()));
    }
    let (n, p) = (x.rows, x.cols);
    let x_mean: Vec<f64> = (0..p).map(|j| x.column(j).sum::<f64>() / n as f64).collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;

    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    let mut centred = vec![0.0; p];
    for (i, yi) in y.iter().enumerate() {
        for (j, c) in centred.iter_mut().enumerate() {
            *c = x.data[i * p + j] - x_mean[j];
        }
        let yc = yi - y_mean;
        for a in 0..p {
            let ca = centred[a];
            if ca == 0.0 {
                continue;
            }
            xty[a] += ca * yc;
            for b in a..p {
                gram[(a, b)] += ca * centred[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }

    let coefficients = if p == 0 {
        Vec::new()
    } else {
        let eig = SymmetricEigen::new(gram);
        let top = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        let cutoff = top * NULL_EIGEN_RTOL;
        let mut beta = DVector::<f64>::zeros(p);
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda <= cutoff {
                continue;
            }
            let v = eig.eigenvectors.column(k);
            let w = v.dot(&xty) / (lambda + ridge);
            beta.axpy(w, &v, 1.0);
        }
        beta.iter().copied().collect::<Vec<f64>>()
    };
    if coefficients.iter().any(|b| !b.is_finite()) {
        return Err(Error::InvalidInput("linear solve produced non-finite coefficients".into()));
    }
    let intercept = y_mean - coefficients.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
    let feature_std = (0..p).map(|j| sample_std(x.column(j), x_mean[j], n)).collect();
    let target_std = sample_std(y.iter().copied(), y_mean, n);
    Ok(LinearModel { intercept, coefficients, feature_std, target_std, ridge })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_line() {
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.5 - 3.0]).collect();
        let y: Vec<f64> = xs.iter().map(|r| 3.0 + 2.0 * r[0]).collect();
        let m = fit_linear(&FeatureMatrix::from_rows(&xs), &y, 1e-12).unwrap();
        assert!((m.intercept - 3.0).abs() < 1e-8);
        assert!((m.coefficients[0] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn duplicated_column_keeps_predictions() {
        let xs: Vec<f64> = (0..30).map(|i| ((i * 7) % 11) as f64).collect();
        let y: Vec<f64> = xs.iter().enumerate().map(|(i, x)| 1.0 + 0.7 * x + ((i % 3) as f64 - 1.0) * 0.2).collect();
        let single = fit_linear(&FeatureMatrix::from_rows(&xs.iter().map(|x| vec![*x]).collect::<Vec<_>>()), &y, DEFAULT_RIDGE).unwrap();
        let dup_rows: Vec<Vec<f64>> = xs.iter().map(|x| vec![*x, *x]).collect();
        let dup = fit_linear(&FeatureMatrix::from_rows(&dup_rows), &y, DEFAULT_RIDGE).unwrap();
        assert!(dup.coefficients.iter().all(|b| b.is_finite()));
        for (x, row) in xs.iter().zip(&dup_rows) {
            assert!((single.predict_row(&[*x]) - dup.predict_row(row)).abs() < 1e-6);
        }
        // the two copies share the weight evenly
        assert!((dup.coefficients[0] - dup.coefficients[1]).abs() < 1e-6);
    }

    #[test]
    fn rejects_non_finite() {
        let x = FeatureMatrix::from_rows(&[vec![1.0], vec![f64::NAN]]);
        assert!(fit_linear(&x, &[1.0, 2.0], 0.0).is_err());
    }

    #[test]
    fn no_features_gives_mean() {
        let x = FeatureMatrix::new(3, 0, vec![]);
        let m = fit_linear(&x, &[1.0, 2.0, 6.0], DEFAULT_RIDGE).unwrap();
        assert_eq!(m.intercept, 3.0);
    }
}
