//! Evaluation metrics: support recovery, coefficient error and derivative
//! error on clean test data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Floor applied before taking `log10` of an error statistic, so exact
/// recoveries aggregate to a finite value.
pub const LOG_FLOOR: f64 = 1e-16;

/// One trial's scores, serialized as a flat JSON object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub tpr: f64,
    pub coef_error: f64,
    pub rmse: f64,
    pub aicc: f64,
}

fn same_shape(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Intersection over union of the nonzero patterns; 1 when both are empty.
pub fn true_positivity_rate(truth: &Matrix, est: &Matrix) -> Result<f64> {
    same_shape(truth, est)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (t, e) in truth.iter().zip(est.iter()) {
        let (a, b) = (*t != 0.0, *e != 0.0);
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// `‖Ξ − Ξ̂‖_F / ‖Ξ‖_F` (the absolute error when `Ξ = 0`).
pub fn coefficient_error(truth: &Matrix, est: &Matrix) -> Result<f64> {
    same_shape(truth, est)?;
    let diff = (truth - est).norm();
    let scale = truth.norm();
    Ok(if scale == 0.0 { diff } else { diff / scale })
}

/// Root mean squared difference between true and estimated derivatives
/// `Θ(X)Ξ` and `Θ(X)Ξ̂`, over every sample and dimension of one trajectory.
pub fn derivative_rmse(truth: &Matrix, est: &Matrix, theta_test: &Matrix) -> Result<f64> {
    same_shape(truth, est)?;
    if theta_test.ncols() != truth.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "test library has {} columns, coefficients {} rows",
            theta_test.ncols(),
            truth.nrows()
        )));
    }
    let r = theta_test * (truth - est);
    let count = (r.nrows() * r.ncols()).max(1) as f64;
    Ok(r.norm() / count.sqrt())
}

pub fn log10_floored(v: f64) -> f64 {
    v.max(LOG_FLOOR).log10()
}

/// Mean and standard error of a sample (stderr 0 for a single value).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
