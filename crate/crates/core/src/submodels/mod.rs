//! The four first-level forecasters.
//!
//! Every model maps one 168-hour window (plus its calendar) to 24 loads in
//! original units. Models other than ARIMA work on min-max scaled loads and
//! carry the normalizer they were fitted with.

pub mod arima;
pub mod elm;
pub mod lstm;
pub mod nusvr;

use rayon::prelude::*;

use crate::data::{NormalizerState, WindowSample};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use arima::ArimaModel;
pub use elm::ElmModel;
pub use lstm::LstmModel;
pub use nusvr::NusvrModel;

pub trait Forecaster: Send + Sync {
    fn name(&self) -> &'static str;

    /// Day-ahead forecast for one window, in original units.
    fn predict(&self, window: &WindowSample) -> Result<Vec<f64>>;

    /// One row per window.
    fn predict_many(&self, windows: &[WindowSample]) -> Result<Matrix> {
        let rows: Vec<Vec<f64>> = windows.par_iter().map(|w| self.predict(w)).collect::<Result<_>>()?;
        if rows.is_empty() {
            return Ok(Matrix::zeros(0, 0));
        }
        Matrix::from_rows(&rows)
    }
}

pub(crate) fn check_window(window: &WindowSample, lookback: usize) -> Result<()> {
    if window.input.len() != lookback {
        return Err(Error::DimensionMismatch {
            expected: lookback,
            actual: window.input.len(),
        });
    }
    Ok(())
}

/// Scaled loads followed by the target-day holiday flag when requested.
pub(crate) fn flat_features(window: &WindowSample, norm: &NormalizerState, holiday: bool) -> Vec<f64> {
    let mut x: Vec<f64> = window.input.iter().map(|&v| norm.normalize(v)).collect();
    if holiday {
        let h = window.target_calendar.first().is_some_and(|c| c.holiday);
        x.push(if h { 1.0 } else { 0.0 });
    }
    x
}

pub(crate) fn ensure_finite(name: &str, out: &[f64]) -> Result<()> {
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{name} forecast")));
    }
    Ok(())
}
