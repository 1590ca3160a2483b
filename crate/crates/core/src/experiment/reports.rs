//! CSV reports. Comma separated, `.` decimals, header row first; floats in
//! shortest round-trip form so a report parses back to the exact values.

use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::config::MetricKind;
use crate::error::{Error, Result};
use crate::eval::{BagVarianceRow, BiasVarianceReport, MetricsReport};
use crate::matrix::Matrix;

pub const TIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// One row of the model comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub name: &'static str,
    pub train: MetricsReport,
    pub test: MetricsReport,
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn metric(report: &MetricsReport, kind: MetricKind) -> f64 {
    match kind {
        MetricKind::Mape => report.mape,
        MetricKind::Mae => report.mae,
        MetricKind::Rmse => report.rmse,
    }
}

/// Writes `rows` under `header` to `path`.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a CSV written by [`write_table`]: header plus string rows.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok((header, rows))
}

pub fn metrics_table(rows: &[ScoreRow], metrics: &[MetricKind]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["model".to_string()];
    for split in ["train", "test"] {
        for m in metrics {
            header.push(format!("{split}_{}", m.label().to_lowercase()));
        }
    }
    let body = rows
        .iter()
        .map(|r| {
            let mut cells = vec![r.name.to_string()];
            for rep in [&r.train, &r.test] {
                cells.extend(metrics.iter().map(|&m| fmt_f64(metric(rep, m))));
            }
            cells
        })
        .collect();
    (header, body)
}

pub fn write_metrics(path: &Path, rows: &[ScoreRow], metrics: &[MetricKind]) -> Result<()> {
    let (h, b) = metrics_table(rows, metrics);
    write_table(path, &h, &b)
}

/// Forecast or design rows keyed by forecast start time; columns named
/// `{prefix}h00 …`, one prefix per block of `block` columns.
pub fn write_matrix(path: &Path, times: &[NaiveDateTime], m: &Matrix, prefixes: &[&str], block: usize) -> Result<()> {
    if times.len() != m.rows() {
        return Err(Error::LengthMismatch {
            left: times.len(),
            right: m.rows(),
        });
    }
    let mut header = vec!["time".to_string()];
    for p in prefixes {
        header.extend((0..block).map(|h| format!("{p}h{h:02}")));
    }
    if header.len() != m.cols() + 1 {
        return Err(Error::DimensionMismatch {
            expected: m.cols() + 1,
            actual: header.len(),
        });
    }
    let rows: Vec<Vec<String>> = times
        .iter()
        .zip(m.iter_rows())
        .map(|(t, r)| {
            std::iter::once(t.format(TIME_FORMAT).to_string())
                .chain(r.iter().map(|&v| fmt_f64(v)))
                .collect()
        })
        .collect();
    write_table(path, &header, &rows)
}

/// Inverse of [`write_matrix`].
pub fn read_matrix(path: &Path) -> Result<(Vec<NaiveDateTime>, Matrix)> {
    let (_, rows) = read_table(path)?;
    let mut times = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let line = i + 2;
        let (t, rest) = r.split_first().ok_or(Error::MalformedRow {
            line,
            reason: "empty row".into(),
        })?;
        times.push(NaiveDateTime::parse_from_str(t, TIME_FORMAT).map_err(|e| Error::MalformedRow {
            line,
            reason: format!("bad time `{t}`: {e}"),
        })?);
        let v: Vec<f64> = rest
            .iter()
            .map(|c| {
                c.parse().map_err(|_| Error::MalformedRow {
                    line,
                    reason: format!("bad number `{c}`"),
                })
            })
            .collect::<Result<_>>()?;
        values.push(v);
    }
    if values.is_empty() {
        return Err(Error::EmptyInput(format!("no rows in {}", path.display())));
    }
    Ok((times, Matrix::from_rows(&values)?))
}

pub fn write_bias_variance(path: &Path, report: &BiasVarianceReport) -> Result<()> {
    let header = ["component", "value", "se"].map(String::from);
    let rows: Vec<Vec<String>> = report
        .rows()
        .into_iter()
        .map(|(c, v, se)| vec![c.to_string(), fmt_f64(v), fmt_f64(se)])
        .collect();
    write_table(path, &header, &rows)
}

pub fn write_variance_table(path: &Path, rows: &[BagVarianceRow]) -> Result<()> {
    let header = ["m", "total_variance", "data_term", "data_term_se", "seed_term", "seed_term_se"].map(String::from);
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.m.to_string(),
                fmt_f64(r.total_variance),
                fmt_f64(r.data_term),
                fmt_f64(r.data_term_se),
                fmt_f64(r.seed_term),
                fmt_f64(r.seed_term_se),
            ]
        })
        .collect();
    write_table(path, &header, &body)
}

/// Stage-indexed train and validation MSE of the two boosting variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePair {
    pub cart_train: Vec<f64>,
    pub cart_val: Vec<f64>,
    pub extra_train: Vec<f64>,
    pub extra_val: Vec<f64>,
}

pub fn write_curves(path: &Path, c: &CurvePair) -> Result<()> {
    let header = ["stage", "cart_train", "cart_val", "extra_train", "extra_val"].map(String::from);
    let body: Vec<Vec<String>> = (0..c.cart_train.len())
        .map(|k| {
            vec![
                k.to_string(),
                fmt_f64(c.cart_train[k]),
                fmt_f64(c.cart_val[k]),
                fmt_f64(c.extra_train[k]),
                fmt_f64(c.extra_val[k]),
            ]
        })
        .collect();
    write_table(path, &header, &body)
}

/// Rows labelled by input configuration, six metric cells each.
pub fn write_ablation(path: &Path, rows: &[(String, MetricsReport, MetricsReport)]) -> Result<()> {
    let mut header = vec!["inputs".to_string()];
    for split in ["train", "test"] {
        header.extend(MetricKind::ALL.iter().map(|m| format!("{split}_{}", m.label().to_lowercase())));
    }
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(label, tr, te)| {
            let mut cells = vec![label.clone()];
            for rep in [tr, te] {
                cells.extend(MetricKind::ALL.iter().map(|&m| fmt_f64(metric(rep, m))));
            }
            cells
        })
        .collect();
    write_table(path, &header, &body)
}
