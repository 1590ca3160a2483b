//! MAPE, MAE and RMSE over `N × T` forecast blocks.
//!
//! RMSE is the mean of per-sample roots: `(1/N) Σ_i sqrt((1/T) Σ_t e²)`,
//! not the root of the pooled MSE.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Percent.
    pub mape: f64,
    pub mae: f64,
    pub rmse: f64,
    pub n_samples: usize,
    pub horizon: usize,
}

impl MetricsReport {
    pub fn compute(y_true: &Matrix, y_pred: &Matrix) -> Result<Self> {
        Ok(Self {
            mape: mape(y_true, y_pred)?,
            mae: mae(y_true, y_pred)?,
            rmse: rmse(y_true, y_pred)?,
            n_samples: y_true.rows(),
            horizon: y_true.cols(),
        })
    }
}

fn check(y_true: &Matrix, y_pred: &Matrix) -> Result<()> {
    if y_true.rows() != y_pred.rows() || y_true.cols() != y_pred.cols() {
        return Err(Error::ShapeMismatch(format!(
            "truth is {}x{}, prediction is {}x{}",
            y_true.rows(),
            y_true.cols(),
            y_pred.rows(),
            y_pred.cols()
        )));
    }
    if y_true.rows() == 0 || y_true.cols() == 0 {
        return Err(Error::EmptyInput("metric inputs".into()));
    }
    Ok(())
}

/// Mean over samples of a per-sample statistic of the `T` step errors.
fn per_sample(y_true: &Matrix, y_pred: &Matrix, f: impl Fn(&[f64], &[f64]) -> f64) -> f64 {
    let n = y_true.rows();
    let mut acc = 0.0;
    for i in 0..n {
        acc += f(y_true.row(i), y_pred.row(i));
    }
    acc / n as f64
}

pub fn mape(y_true: &Matrix, y_pred: &Matrix) -> Result<f64> {
    check(y_true, y_pred)?;
    for i in 0..y_true.rows() {
        if let Some(step) = y_true.row(i).iter().position(|&v| v == 0.0) {
            return Err(Error::ZeroTruth { sample: i, step });
        }
    }
    Ok(100.0
        * per_sample(y_true, y_pred, |t, p| {
            t.iter().zip(p).map(|(a, b)| (a - b).abs() / a.abs()).sum::<f64>() / t.len() as f64
        }))
}

pub fn mae(y_true: &Matrix, y_pred: &Matrix) -> Result<f64> {
    check(y_true, y_pred)?;
    Ok(per_sample(y_true, y_pred, |t, p| {
        t.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>() / t.len() as f64
    }))
}

pub fn rmse(y_true: &Matrix, y_pred: &Matrix) -> Result<f64> {
    check(y_true, y_pred)?;
    Ok(per_sample(y_true, y_pred, |t, p| {
        (t.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / t.len() as f64).sqrt()
    }))
}
