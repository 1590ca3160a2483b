//! Hourly load ingest, calendar features, min-max scaling and windowing into
//! (one week in, one day out) supervised samples.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LOOKBACK: usize = 168;
pub const HORIZON: usize = 24;
pub const STRIDE: usize = 24;

/// Set of dates flagged as holidays.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HolidayCalendar(BTreeSet<NaiveDate>);

impl HolidayCalendar {
    pub fn new(dates: impl IntoIterator<Item = NaiveDate>) -> Self {
        Self(dates.into_iter().collect())
    }

    /// Reads one ISO-8601 date per line. Blank lines and `#` comments are skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut dates = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let d = NaiveDate::parse_from_str(line, "%Y-%m-%d").map_err(|e| {
                Error::MalformedRow {
                    line: i + 1,
                    reason: format!("bad holiday date `{line}`: {e}"),
                }
            })?;
            dates.insert(d);
        }
        Ok(Self(dates))
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.0.contains(&date)
    }

    pub fn dates(&self) -> impl Iterator<Item = &NaiveDate> {
        self.0.iter()
    }

    pub fn to_text(&self) -> String {
        self.0.iter().map(|d| format!("{d}\n")).collect()
    }
}

/// Gap-free hourly load series, values in 10^4 kWh.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyLoadSeries {
    start: NaiveDateTime,
    values: Vec<f64>,
    /// One flag per calendar day touched by the series, starting at `start.date()`.
    holiday_flags: Vec<bool>,
}

impl HourlyLoadSeries {
    pub fn new(start: NaiveDateTime, values: Vec<f64>, calendar: &HolidayCalendar) -> Result<Self> {
        if start.minute() != 0 || start.second() != 0 || start.nanosecond() != 0 {
            return Err(Error::MalformedRow {
                line: 2,
                reason: format!("start {start} is not on an hour boundary"),
            });
        }
        if values.is_empty() {
            return Err(Error::EmptyInput("load series".into()));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("load value at index {i}")));
            }
            if v <= 0.0 {
                return Err(Error::NonPositiveLoad {
                    line: i + 2,
                    value: v,
                });
            }
        }
        let last = start + Duration::hours(values.len() as i64 - 1);
        let first_day = start.date();
        let n_days = (last.date() - first_day).num_days() as usize + 1;
        let holiday_flags = (0..n_days)
            .map(|d| calendar.contains(first_day + Duration::days(d as i64)))
            .collect();
        Ok(Self {
            start,
            values,
            holiday_flags,
        })
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn holiday_flags(&self) -> &[bool] {
        &self.holiday_flags
    }

    pub fn timestamp(&self, index: usize) -> NaiveDateTime {
        self.start + Duration::hours(index as i64)
    }

    /// Calendar features of the hour at `index`. Indices past the end are
    /// allowed (forecast horizons); their holiday flag is looked up in
    /// `calendar` when given, otherwise taken as non-holiday.
    pub fn calendar_at(&self, index: usize, calendar: Option<&HolidayCalendar>) -> CalendarFeatures {
        let ts = self.timestamp(index);
        let day = (ts.date() - self.start.date()).num_days() as usize;
        let holiday = match self.holiday_flags.get(day) {
            Some(&h) => h,
            None => calendar.is_some_and(|c| c.contains(ts.date())),
        };
        CalendarFeatures::from_parts(ts, holiday)
    }

    /// Reads a `timestamp,load` CSV and validates the hourly cadence.
    pub fn load_csv(path: impl AsRef<Path>, calendar: &HolidayCalendar) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, calendar)
    }

    pub fn read_csv(reader: impl std::io::Read, calendar: &HolidayCalendar) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "timestamp" || &headers[1] != "load" {
            return Err(Error::MalformedRow {
                line: 1,
                reason: format!("expected header `timestamp,load`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut start: Option<NaiveDateTime> = None;
        let mut values = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| Error::MalformedRow {
                line,
                reason: e.to_string(),
            })?;
            if record.len() != 2 {
                return Err(Error::MalformedRow {
                    line,
                    reason: format!("expected 2 fields, got {}", record.len()),
                });
            }
            let ts = parse_timestamp(&record[0]).ok_or_else(|| Error::MalformedRow {
                line,
                reason: format!("bad timestamp `{}`", &record[0]),
            })?;
            if ts.minute() != 0 || ts.second() != 0 {
                return Err(Error::MalformedRow {
                    line,
                    reason: format!("timestamp {ts} is not at hour resolution"),
                });
            }
            let load: f64 = record[1].parse().map_err(|_| Error::MalformedRow {
                line,
                reason: format!("bad load value `{}`", &record[1]),
            })?;
            if !load.is_finite() {
                return Err(Error::MalformedRow {
                    line,
                    reason: format!("non-finite load `{}`", &record[1]),
                });
            }
            if load <= 0.0 {
                return Err(Error::NonPositiveLoad { line, value: load });
            }
            match start {
                None => start = Some(ts),
                Some(s) => {
                    let expected = s + Duration::hours(values.len() as i64);
                    if ts > expected {
                        return Err(Error::MissingTimestamp {
                            line,
                            expected: expected.to_string(),
                            found: ts.to_string(),
                        });
                    }
                    if ts < expected {
                        return Err(Error::MalformedRow {
                            line,
                            reason: format!("timestamp {ts} out of order (expected {expected})"),
                        });
                    }
                }
            }
            values.push(load);
        }
        let start = start.ok_or_else(|| Error::EmptyInput("CSV has no data rows".into()))?;
        Self::new(start, values, calendar)
    }

    /// Writes the series as a `timestamp,load` CSV.
    pub fn write_csv(&self, writer: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["timestamp", "load"])?;
        for (i, v) in self.values.iter().enumerate() {
            w.write_record([
                self.timestamp(i).format("%Y-%m-%dT%H:%M:%S").to_string(),
                v.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    const FORMATS: [&str; 4] = [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%d %H:%M",
    ];
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .or_else(|| {
            let s = s.strip_suffix('Z')?;
            FORMATS.iter().find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        })
}

/// Calendar annotation of one hour: weekday (Monday = 0), holiday flag, hour of day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarFeatures {
    pub weekday: u8,
    pub holiday: bool,
    pub hour: u8,
}

impl CalendarFeatures {
    pub fn from_parts(ts: NaiveDateTime, holiday: bool) -> Self {
        Self {
            weekday: ts.weekday().num_days_from_monday() as u8,
            holiday,
            hour: ts.hour() as u8,
        }
    }

    pub fn weekday_onehot(&self) -> [f64; 7] {
        let mut v = [0.0; 7];
        v[self.weekday as usize] = 1.0;
        v
    }

    pub fn holiday_flag(&self) -> f64 {
        if self.holiday {
            1.0
        } else {
            0.0
        }
    }

    pub fn hour_onehot(&self) -> [f64; 24] {
        let mut v = [0.0; 24];
        v[self.hour as usize] = 1.0;
        v
    }

    /// Appends the selected one-hot blocks in W, H, hour order.
    pub fn encode_into(&self, features: InputFeatures, out: &mut Vec<f64>) {
        if features.weekday {
            out.extend_from_slice(&self.weekday_onehot());
        }
        if features.holiday {
            out.push(self.holiday_flag());
        }
        if features.hour {
            out.extend_from_slice(&self.hour_onehot());
        }
    }
}

pub fn calendar_features(ts: NaiveDateTime, calendar: &HolidayCalendar) -> CalendarFeatures {
    CalendarFeatures::from_parts(ts, calendar.contains(ts.date()))
}

/// Which calendar one-hot blocks a model receives next to the load values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputFeatures {
    pub weekday: bool,
    pub holiday: bool,
    pub hour: bool,
}

impl InputFeatures {
    pub const NONE: Self = Self {
        weekday: false,
        holiday: false,
        hour: false,
    };

    pub fn width(&self) -> usize {
        7 * usize::from(self.weekday) + usize::from(self.holiday) + 24 * usize::from(self.hour)
    }

    /// The six input configurations compared for the LSTM, in report order.
    pub fn ablation_grid() -> [Self; 6] {
        let f = |holiday, weekday, hour| Self {
            weekday,
            holiday,
            hour,
        };
        [
            f(false, false, false),
            f(true, false, false),
            f(true, false, true),
            f(false, true, true),
            f(true, true, true),
            f(true, true, false),
        ]
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.holiday {
            parts.push("Holiday");
        }
        if self.weekday {
            parts.push("Weekday");
        }
        if self.hour {
            parts.push("Hour");
        }
        if parts.is_empty() {
            "None".to_string()
        } else {
            parts.join(", ")
        }
    }
}

/// Min-max scaling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizerState {
    pub min: f64,
    pub max: f64,
}

impl NormalizerState {
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("normalizer input".into()));
        }
        let (min, max) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if !min.is_finite() || !max.is_finite() {
            return Err(Error::NonFinite("normalizer input".into()));
        }
        if max <= min {
            return Err(Error::DegenerateRange(min));
        }
        Ok(Self { min, max })
    }

    #[inline]
    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    #[inline]
    pub fn denormalize(&self, u: f64) -> f64 {
        u * (self.max - self.min) + self.min
    }
}

pub fn minmax_fit_transform(values: &[f64]) -> Result<(Vec<f64>, NormalizerState)> {
    let state = NormalizerState::fit(values)?;
    Ok((values.iter().map(|&v| state.normalize(v)).collect(), state))
}

/// One supervised sample: a lookback window of raw loads and the horizon
/// that immediately follows it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    /// Series index of the first input hour.
    pub input_start: usize,
    pub input_start_time: NaiveDateTime,
    pub input: Vec<f64>,
    pub target: Vec<f64>,
    pub input_calendar: Vec<CalendarFeatures>,
    pub target_calendar: Vec<CalendarFeatures>,
}

impl WindowSample {
    pub fn target_start(&self) -> usize {
        self.input_start + self.input.len()
    }

    pub fn target_start_time(&self) -> NaiveDateTime {
        self.input_start_time + Duration::hours(self.input.len() as i64)
    }

    /// Calendar of the hour `horizon` steps after input step `t`; inside the
    /// last day of the window this is the matching forecast hour.
    pub fn shifted_calendar(&self, t: usize) -> CalendarFeatures {
        let horizon = self.target.len();
        let lookback = self.input.len();
        let k = t + horizon;
        if k < lookback {
            self.input_calendar[k]
        } else {
            self.target_calendar[k - lookback]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedWindowSet {
    pub lookback: usize,
    pub horizon: usize,
    pub samples: Vec<WindowSample>,
    pub normalizer: NormalizerState,
}

impl SupervisedWindowSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn normalized_input(&self, i: usize) -> Vec<f64> {
        self.samples[i]
            .input
            .iter()
            .map(|&v| self.normalizer.normalize(v))
            .collect()
    }

    pub fn normalized_target(&self, i: usize) -> Vec<f64> {
        self.samples[i]
            .target
            .iter()
            .map(|&v| self.normalizer.normalize(v))
            .collect()
    }

    pub fn targets(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.target.clone()).collect()
    }

    /// Samples `[start, end)` with the same normalizer.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            lookback: self.lookback,
            horizon: self.horizon,
            samples: self.samples[start..end].to_vec(),
            normalizer: self.normalizer,
        }
    }
}

/// Cuts the series into (lookback, horizon) windows advancing by `stride`.
/// The returned normalizer is fitted on the whole series; [`split_train_test`]
/// refits it on the training portion.
pub fn make_windows(
    series: &HourlyLoadSeries,
    lookback: usize,
    horizon: usize,
    stride: usize,
) -> Result<SupervisedWindowSet> {
    if lookback == 0 || horizon == 0 || stride == 0 {
        return Err(Error::hyper(
            "window",
            "lookback, horizon and stride must be positive",
        ));
    }
    let span = lookback + horizon;
    if series.len() < span {
        return Err(Error::SeriesTooShort {
            required: span,
            actual: series.len(),
        });
    }
    let count = (series.len() - span) / stride + 1;
    let calendar: Vec<CalendarFeatures> = (0..series.len())
        .map(|i| series.calendar_at(i, None))
        .collect();
    let values = series.values();
    let samples = (0..count)
        .map(|k| {
            let s = k * stride;
            WindowSample {
                input_start: s,
                input_start_time: series.timestamp(s),
                input: values[s..s + lookback].to_vec(),
                target: values[s + lookback..s + span].to_vec(),
                input_calendar: calendar[s..s + lookback].to_vec(),
                target_calendar: calendar[s + lookback..s + span].to_vec(),
            }
        })
        .collect();
    Ok(SupervisedWindowSet {
        lookback,
        horizon,
        samples,
        normalizer: NormalizerState::fit(values)?,
    })
}

/// Chronological split: a window is in the training set when its whole span
/// (inputs and targets) lies within the first `train_days` days. Both halves
/// carry a normalizer fitted on training windows only.
pub fn split_train_test(
    windows: &SupervisedWindowSet,
    train_days: usize,
) -> Result<(SupervisedWindowSet, SupervisedWindowSet)> {
    if train_days == 0 {
        return Err(Error::EmptySplit("train_days must be at least 1".into()));
    }
    let boundary = train_days * 24;
    let span = windows.lookback + windows.horizon;
    let n_train = windows
        .samples
        .iter()
        .take_while(|s| s.input_start + span <= boundary)
        .count();
    if n_train == 0 {
        return Err(Error::EmptySplit(format!(
            "no window fits inside the first {train_days} days"
        )));
    }
    if n_train == windows.len() {
        return Err(Error::EmptySplit(format!(
            "{train_days} training days leave no test window"
        )));
    }
    let train_values: Vec<f64> = windows.samples[..n_train]
        .iter()
        .flat_map(|s| s.input.iter().chain(s.target.iter()).copied())
        .collect();
    let normalizer = NormalizerState::fit(&train_values)?;
    let mut train = windows.slice(0, n_train);
    let mut test = windows.slice(n_train, windows.len());
    train.normalizer = normalizer;
    test.normalizer = normalizer;
    Ok((train, test))
}
