//! ARIMA(1,1,1) by conditional sum of squares.
//!
//! On the once-differenced series `z_t = x_t − x_{t−1}`:
//! `z_t = c + φ·z_{t−1} + ε_t + θ·ε_{t−1}`, with the pre-sample `ε` set to 0.
//! The three parameters minimize `Σ ε_t²` under Nelder–Mead; values outside
//! the stationary/invertible region are rejected during the search and
//! clamped afterwards if the optimum sits on the boundary.

use serde::{Deserialize, Serialize};

use super::{check_window, ensure_finite, Forecaster};
use crate::data::{SupervisedWindowSet, WindowSample, HORIZON, LOOKBACK};
use crate::error::{Error, Result};

/// Largest admissible `|φ|` and `|θ|` after fitting.
pub const COEF_LIMIT: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaModel {
    pub c: f64,
    pub phi: f64,
    pub theta: f64,
    /// Set when a coefficient had to be pulled back inside `±COEF_LIMIT`.
    pub clamped: bool,
    /// Mean squared one-step residual at the optimum.
    pub sigma2: f64,
}

impl ArimaModel {
    pub fn new(c: f64, phi: f64, theta: f64) -> Self {
        Self {
            c,
            phi,
            theta,
            clamped: false,
            sigma2: 0.0,
        }
    }

    /// Fits on the series covered by the windows. Windows that overlap or
    /// abut are merged into one stretch; a gap starts a new stretch.
    pub fn fit_windows(set: &SupervisedWindowSet) -> Result<Self> {
        if set.samples.is_empty() {
            return Err(Error::EmptyInput("ARIMA training windows".into()));
        }
        let mut segments: Vec<Vec<f64>> = Vec::new();
        let mut next = usize::MAX;
        for w in &set.samples {
            let end = w.target_start() + w.target.len();
            let all = w.input.iter().chain(&w.target);
            match segments.last_mut() {
                Some(seg) if w.input_start <= next => {
                    // Append whatever part of this window's span is new.
                    if end > next {
                        seg.extend(all.skip(next - w.input_start));
                        next = end;
                    }
                }
                _ => {
                    segments.push(all.copied().collect());
                    next = end;
                }
            }
        }
        fit_arima_segments(&segments)
    }
}

fn difference(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

/// One-step residuals of the recursion over `z`.
fn residuals(z: &[f64], c: f64, phi: f64, theta: f64) -> Vec<f64> {
    let mut e = vec![0.0; z.len()];
    for t in 1..z.len() {
        e[t] = z[t] - c - phi * z[t - 1] - theta * e[t - 1];
    }
    e
}

/// Conditional sum of squares, restarting the recursion on every segment.
fn css(segments: &[Vec<f64>], p: &[f64]) -> f64 {
    let (c, phi, theta) = (p[0], p[1], p[2]);
    if phi.abs() >= 1.0 || theta.abs() >= 1.0 {
        return f64::INFINITY;
    }
    segments
        .iter()
        .map(|z| residuals(z, c, phi, theta)[1..].iter().map(|e| e * e).sum::<f64>())
        .sum()
}

pub fn fit_arima(series: &[f64]) -> Result<ArimaModel> {
    fit_arima_segments(&[series.to_vec()])
}

/// One parameter set fitted jointly on several disjoint stretches of a series.
pub fn fit_arima_segments(segments: &[Vec<f64>]) -> Result<ArimaModel> {
    let total: usize = segments.iter().map(Vec::len).sum();
    if total <= 10 {
        return Err(Error::SeriesTooShort {
            required: 11,
            actual: total,
        });
    }
    if segments.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ARIMA series".into()));
    }
    let diffs: Vec<Vec<f64>> = segments
        .iter()
        .filter(|s| s.len() >= 3)
        .map(|s| difference(s))
        .collect();
    let n_resid: usize = diffs.iter().map(|z| z.len() - 1).sum();
    let all: Vec<f64> = diffs.iter().flatten().copied().collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let sd = (all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / all.len() as f64).sqrt();
    let x0 = [mean, 0.0, 0.0];
    let steps = [0.1 * sd.max(1e-8), 0.2, 0.2];
    let (best, fbest) = nelder_mead(|p| css(&diffs, p), &x0, &steps, 4000, 1e-12);
    let mut clamped = false;
    let mut clamp = |v: f64| {
        if v.abs() > COEF_LIMIT {
            clamped = true;
            v.signum() * COEF_LIMIT
        } else {
            v
        }
    };
    let phi = clamp(best[1]);
    let theta = clamp(best[2]);
    Ok(ArimaModel {
        c: best[0],
        phi,
        theta,
        clamped,
        sigma2: fbest / n_resid as f64,
    })
}

/// Recursive forecast with future shocks set to 0, then undifferenced.
pub fn arima_forecast(model: &ArimaModel, history: &[f64], horizon: usize) -> Result<Vec<f64>> {
    if history.len() < 2 {
        return Err(Error::InsufficientHistory {
            required: 2,
            actual: history.len(),
        });
    }
    let z = difference(history);
    let e = residuals(&z, model.c, model.phi, model.theta);
    let mut z_prev = *z.last().expect("non-empty");
    let mut e_prev = *e.last().expect("non-empty");
    let mut level = *history.last().expect("non-empty");
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let zn = model.c + model.phi * z_prev + model.theta * e_prev;
        level += zn;
        out.push(level);
        z_prev = zn;
        e_prev = 0.0;
    }
    Ok(out)
}

impl Forecaster for ArimaModel {
    fn name(&self) -> &'static str {
        "ARIMA"
    }

    fn predict(&self, window: &WindowSample) -> Result<Vec<f64>> {
        check_window(window, LOOKBACK)?;
        let out = arima_forecast(self, &window.input, HORIZON)?;
        ensure_finite(self.name(), &out)?;
        Ok(out)
    }
}

/// Derivative-free simplex minimizer. Returns the best vertex and its value.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    steps: &[f64],
    max_evals: usize,
    ftol: f64,
) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += steps[i];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut evals = n + 1;
    while evals < max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        let (lo, hi) = (values[0], values[n]);
        if hi.is_finite() && (hi - lo).abs() <= ftol * (lo.abs() + ftol) {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            evals += 1;
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
        } else {
            let (xc, fc) = if fr < values[n] {
                let xc = along(-0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            evals += 1;
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    let v: Vec<f64> = simplex[0]
                        .iter()
                        .zip(&simplex[i])
                        .map(|(b, x)| b + 0.5 * (x - b))
                        .collect();
                    values[i] = f(&v);
                    simplex[i] = v;
                }
                evals += n;
            }
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("non-empty simplex");
    (simplex[best].clone(), values[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn random_walk_and_drift() {
        let h = [10.0, 11.0, 12.5, 12.0];
        let rw = arima_forecast(&ArimaModel::new(0.0, 0.0, 0.0), &h, 24).unwrap();
        assert!(rw.iter().all(|&v| v == 12.0));
        let drift = arima_forecast(&ArimaModel::new(0.5, 0.0, 0.0), &h, 4).unwrap();
        for (k, v) in drift.iter().enumerate() {
            assert!((v - (12.0 + 0.5 * (k + 1) as f64)).abs() < 1e-12);
        }
        assert!(matches!(
            arima_forecast(&ArimaModel::new(0.0, 0.0, 0.0), &[1.0], 3),
            Err(Error::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn recovers_ar_coefficient() {
        let mut r = rng::stream(31);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let mut x = vec![0.0];
        let mut z = 0.0;
        for _ in 0..2000 {
            z = 0.6 * z + noise.sample(&mut r);
            x.push(x.last().unwrap() + z);
        }
        let m = fit_arima(&x).unwrap();
        assert!((m.phi - 0.6).abs() < 0.1, "phi = {}", m.phi);
        assert!(m.phi.abs() < 1.0 && m.theta.abs() < 1.0);
    }

    #[test]
    fn nelder_mead_quadratic() {
        let (x, fx) = nelder_mead(
            |p| (p[0] - 1.0).powi(2) + 3.0 * (p[1] + 2.0).powi(2),
            &[0.0, 0.0],
            &[0.5, 0.5],
            2000,
            1e-14,
        );
        assert!((x[0] - 1.0).abs() < 1e-5 && (x[1] + 2.0).abs() < 1e-5, "{x:?}");
        assert!(fx < 1e-9);
    }

    #[test]
    fn gapped_windows_fit_per_segment() {
        use crate::data::{make_windows, HolidayCalendar, HourlyLoadSeries};
        let mut r = rng::stream(5);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let values: Vec<f64> = (0..24 * 40)
            .map(|i| 100.0 + 10.0 * (i as f64 * std::f64::consts::TAU / 24.0).sin() + noise.sample(&mut r))
            .collect();
        let start = chrono::NaiveDate::from_ymd_opt(2020, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let series = HourlyLoadSeries::new(start, values, &HolidayCalendar::default()).unwrap();
        let w = make_windows(&series, LOOKBACK, HORIZON, 24).unwrap();
        let contiguous = ArimaModel::fit_windows(&w).unwrap();
        let whole = fit_arima(series.values()).unwrap();
        assert_eq!(contiguous, whole);
        // Dropping a block of windows leaves two stretches.
        let mut gapped = w.slice(0, 10);
        gapped.samples.extend(w.slice(20, w.len()).samples);
        let m = ArimaModel::fit_windows(&gapped).unwrap();
        let first = series.values()[..w.samples[9].target_start() + HORIZON].to_vec();
        let second = series.values()[w.samples[20].input_start..].to_vec();
        assert_eq!(m, fit_arima_segments(&[first, second]).unwrap());
    }

    #[test]
    fn short_series_rejected() {
        assert!(matches!(fit_arima(&[1.0; 5]), Err(Error::SeriesTooShort { .. })));
    }
}
