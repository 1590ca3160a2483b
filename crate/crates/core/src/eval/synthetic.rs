//! Synthetic hourly load with a known noiseless mean.
//!
//! `value(t) = base + daily·sin(2πh/24) + weekly·sin(2πd/7) − dip·base·[holiday] + ε`,
//! with `h` the hour of day, `d` the weekday (Monday = 0) and `ε` a stationary
//! Gaussian AR(1) sequence with marginal variance `σ²` and lag-one
//! correlation `ar` (white noise when `ar = 0`). Holidays fall on a fixed set
//! of month/day pairs every year.

use std::f64::consts::PI;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{HolidayCalendar, HourlyLoadSeries};
use crate::error::{Error, Result};
use crate::rng;

/// Month/day pairs treated as holidays in every generated year.
const HOLIDAYS: [(u32, u32); 17] = [
    (1, 1),
    (1, 2),
    (2, 16),
    (2, 17),
    (2, 18),
    (4, 5),
    (5, 1),
    (5, 2),
    (6, 18),
    (9, 24),
    (10, 1),
    (10, 2),
    (10, 3),
    (10, 4),
    (10, 5),
    (10, 6),
    (10, 7),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticLoadSpec {
    pub start: NaiveDateTime,
    pub days: usize,
    pub base: f64,
    pub daily: f64,
    pub weekly: f64,
    /// Holiday reduction as a fraction of `base`.
    pub holiday_dip: f64,
    pub noise: f64,
    /// Lag-one autocorrelation of the hourly noise, in `[0, 1)`.
    pub ar: f64,
    pub seed: u64,
}

impl Default for SyntheticLoadSpec {
    fn default() -> Self {
        Self {
            start: NaiveDate::from_ymd_opt(2017, 1, 1)
                .and_then(|d| d.and_hms_opt(0, 0, 0))
                .expect("valid constant date"),
            days: 365,
            base: 100.0,
            daily: 20.0,
            weekly: 8.0,
            holiday_dip: 0.2,
            noise: 2.0,
            ar: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticLoadSpec {
    /// Forecasting benchmark: louder, persistent noise, so that a day-ahead
    /// forecast has information to extract from the last week beyond the
    /// calendar mean.
    pub fn benchmark() -> Self {
        Self {
            noise: 4.0,
            ar: 0.97,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("daily", self.daily),
            ("weekly", self.weekly),
            ("holiday_dip", self.holiday_dip),
            ("noise", self.noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::hyper(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !(self.base > 0.0 && self.base.is_finite()) {
            return Err(Error::hyper("base", format!("must be positive, got {}", self.base)));
        }
        if !(0.0..1.0).contains(&self.ar) {
            return Err(Error::hyper("ar", format!("must lie in [0, 1), got {}", self.ar)));
        }
        if self.days == 0 {
            return Err(Error::hyper("days", "must be at least 1"));
        }
        if self.start.minute() != 0 || self.start.second() != 0 {
            return Err(Error::hyper("start", "must fall on an hour boundary"));
        }
        Ok(())
    }

    pub fn hours(&self) -> usize {
        self.days * 24
    }

    pub fn timestamp(&self, index: usize) -> NaiveDateTime {
        self.start + Duration::hours(index as i64)
    }

    pub fn is_holiday(date: NaiveDate) -> bool {
        HOLIDAYS.contains(&(date.month(), date.day()))
    }

    /// Holidays for every year the series touches.
    pub fn calendar(&self) -> HolidayCalendar {
        let first = self.start.year();
        let last = self.timestamp(self.hours().saturating_sub(1)).year();
        HolidayCalendar::new(
            (first..=last)
                .flat_map(|y| HOLIDAYS.iter().filter_map(move |&(m, d)| NaiveDate::from_ymd_opt(y, m, d))),
        )
    }

    /// The noiseless mean at a timestamp: the Bayes predictor under squared loss.
    pub fn mean_at(&self, ts: NaiveDateTime) -> f64 {
        let h = ts.hour() as f64;
        let d = ts.weekday().num_days_from_monday() as f64;
        let mut v = self.base + self.daily * (2.0 * PI * h / 24.0).sin() + self.weekly * (2.0 * PI * d / 7.0).sin();
        if Self::is_holiday(ts.date()) {
            v -= self.holiday_dip * self.base;
        }
        v
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise * self.noise
    }
}

/// Draws the series; the same spec (seed included) always gives the same values.
pub fn generate_synthetic(spec: &SyntheticLoadSpec) -> Result<(HourlyLoadSeries, HolidayCalendar)> {
    spec.validate()?;
    let normal = Normal::new(0.0, spec.noise).map_err(|e| Error::hyper("noise", e.to_string()))?;
    let mut r = rng::stream(rng::derive_named(spec.seed, "synthetic-noise"));
    let innovation = (1.0 - spec.ar * spec.ar).sqrt();
    let mut eps = normal.sample(&mut r);
    let values: Vec<f64> = (0..spec.hours())
        .map(|i| {
            if i > 0 {
                eps = spec.ar * eps + innovation * normal.sample(&mut r);
            }
            spec.mean_at(spec.timestamp(i)) + eps
        })
        .collect();
    let cal = spec.calendar();
    let series = HourlyLoadSeries::new(spec.start, values, &cal)?;
    Ok((series, cal))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_series_is_the_mean() {
        let spec = SyntheticLoadSpec { noise: 0.0, days: 20, ..Default::default() };
        let (s, _) = generate_synthetic(&spec).unwrap();
        for (i, v) in s.values().iter().enumerate() {
            assert_eq!(*v, spec.mean_at(spec.timestamp(i)));
        }
    }

    #[test]
    fn seeded_and_holiday_aware() {
        let spec = SyntheticLoadSpec { days: 40, seed: 3, ..Default::default() };
        let (a, cal) = generate_synthetic(&spec).unwrap();
        let (b, _) = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        assert!(cal.contains(NaiveDate::from_ymd_opt(2017, 1, 1).unwrap()));
        assert!(a.holiday_flags()[0] && !a.holiday_flags()[5]);
        let other = generate_synthetic(&SyntheticLoadSpec { seed: 4, ..spec }).unwrap().0;
        assert_ne!(a.values(), other.values());
    }

    #[test]
    fn invalid_spec() {
        assert!(generate_synthetic(&SyntheticLoadSpec { noise: -1.0, ..Default::default() }).is_err());
        assert!(generate_synthetic(&SyntheticLoadSpec { days: 0, ..Default::default() }).is_err());
    }
}
