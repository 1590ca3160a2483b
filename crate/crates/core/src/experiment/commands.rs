//! The `stlf` subcommands as library functions: each takes a resolved
//! configuration and an output directory and writes its artifacts there.
//!
//! Layout of a `run` directory:
//!
//! ```text
//! config.toml                 resolved configuration
//! metrics.csv                 train and test scores per model
//! predictions/{model}_{split}.csv
//! stacking/{train,test}.csv   stacked design, one block per submodel
//! models/{model}.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use super::config::{EnsembleKind, ExperimentConfig, MetricKind};
use super::ensembles::HourlyEnsemble;
use super::persist::{load_model, save_model};
use super::pipeline::{self, BiasVarianceOutput, RunOutput};
use super::reports::{self, fmt_f64};
use super::stacking::{StackingSplit, Submodels, SUBMODEL_NAMES};
use crate::error::{Error, Result};
use crate::eval::MetricsReport;
use crate::matrix::Matrix;

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// File stem of a model: its report name in lower case.
pub fn model_stem(name: &str) -> String {
    name.to_lowercase()
}

pub fn predictions_path(out: &Path, name: &str, split: &str) -> PathBuf {
    out.join("predictions").join(format!("{}_{split}.csv", model_stem(name)))
}

fn write_split(path: &Path, split: &StackingSplit) -> Result<()> {
    let t = split.targets.cols();
    let prefixes: Vec<String> = SUBMODEL_NAMES.iter().map(|n| format!("{}_", model_stem(n))).collect();
    let prefixes: Vec<&str> = prefixes.iter().map(String::as_str).collect();
    reports::write_matrix(path, &split.times, &split.inputs, &prefixes, t)
}

fn write_forecast(path: &Path, split: &StackingSplit, m: &Matrix) -> Result<()> {
    reports::write_matrix(path, &split.times, m, &[""], m.cols())
}

/// Runs the hybrid and writes every artifact under `out`.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutput> {
    let run = pipeline::run_pipeline(cfg)?;
    write_run(cfg, &run, out).map_err(|e| e.in_stage("write"))?;
    Ok(run)
}

pub fn write_run(cfg: &ExperimentConfig, run: &RunOutput, out: &Path) -> Result<()> {
    for sub in ["predictions", "stacking", "models"] {
        mkdir(&out.join(sub))?;
    }
    let config_path = out.join("config.toml");
    fs::write(&config_path, cfg.to_toml()?).map_err(|e| Error::io(&config_path, e))?;
    reports::write_metrics(&out.join("metrics.csv"), &run.scores, &cfg.metrics)?;
    write_split(&out.join("stacking").join("train.csv"), &run.stacking.train)?;
    write_split(&out.join("stacking").join("test.csv"), &run.stacking.test)?;
    for p in &run.predictions {
        write_forecast(&predictions_path(out, p.name, "train"), &run.stacking.train, &p.train)?;
        write_forecast(&predictions_path(out, p.name, "test"), &run.stacking.test, &p.test)?;
    }
    let models = out.join("models");
    let s = &run.submodels;
    save_model(&s.arima, models.join("arima.json"))?;
    save_model(&s.nusvr, models.join("nusvr.json"))?;
    save_model(&s.elm, models.join("elm.json"))?;
    save_model(&s.lstm, models.join("lstm.json"))?;
    for e in &run.ensembles {
        save_model(e, models.join(format!("{}.json", model_stem(e.name()))))?;
    }
    Ok(())
}

pub fn load_submodels(models: &Path) -> Result<Submodels> {
    Ok(Submodels {
        arima: load_model(models.join("arima.json"))?,
        nusvr: load_model(models.join("nusvr.json"))?,
        elm: load_model(models.join("elm.json"))?,
        lstm: load_model(models.join("lstm.json"))?,
    })
}

/// Ensembles found in `models`, in report order.
pub fn load_ensembles(models: &Path) -> Result<Vec<HourlyEnsemble>> {
    let mut out = Vec::new();
    for kind in EnsembleKind::ALL {
        let path = models.join(format!("{}.json", model_stem(kind.name())));
        if path.exists() {
            let e: HourlyEnsemble = load_model(&path)?;
            if e.kind != kind {
                return Err(Error::CorruptFile(format!(
                    "{} holds a {} ensemble",
                    path.display(),
                    e.name()
                )));
            }
            out.push(e);
        }
    }
    Ok(out)
}

/// Reloads the models saved by `run` from `models` and forecasts the test
/// windows of the configured data. Writes `predictions/{model}_test.csv`
/// and returns the forecasts by model name.
pub fn cmd_predict(cfg: &ExperimentConfig, models: &Path, out: &Path) -> Result<Vec<(&'static str, Matrix)>> {
    cfg.validate()?;
    let seed = cfg.master_seed()?;
    let data = pipeline::prepare_data(cfg, seed).map_err(|e| e.in_stage("data"))?;
    let (submodels, ensembles) = (|| Ok::<_, Error>((load_submodels(models)?, load_ensembles(models)?)))()
        .map_err(|e| e.in_stage("load"))?;
    let blocks = submodels.forecast(&data.test.samples).map_err(|e| e.in_stage("submodels"))?;
    let design = super::stacking::hstack(&blocks)?;
    let split = StackingSplit {
        times: data.test.samples.iter().map(|w| w.target_start_time()).collect(),
        inputs: design,
        targets: Matrix::from_rows(&data.test.targets())?,
    };
    let mut forecasts: Vec<(&'static str, Matrix)> = SUBMODEL_NAMES.iter().copied().zip(blocks).collect();
    for e in &ensembles {
        forecasts.push((e.name(), e.predict(&split.inputs).map_err(|err| err.in_stage(e.name()))?));
    }
    mkdir(&out.join("predictions"))?;
    for (name, m) in &forecasts {
        write_forecast(&predictions_path(out, name, "test"), &split, m)?;
    }
    Ok(forecasts)
}

/// Scores every `predictions/{model}_test.csv` under `predictions` against
/// the test targets of the configured data; writes `metrics.csv` to `out`.
pub fn cmd_evaluate(cfg: &ExperimentConfig, predictions: &Path, out: &Path) -> Result<Vec<(String, MetricsReport)>> {
    cfg.validate()?;
    let seed = cfg.master_seed()?;
    let data = pipeline::prepare_data(cfg, seed).map_err(|e| e.in_stage("data"))?;
    let truth = Matrix::from_rows(&data.test.targets())?;
    let times: Vec<_> = data.test.samples.iter().map(|w| w.target_start_time()).collect();
    let names = SUBMODEL_NAMES
        .iter()
        .copied()
        .chain(EnsembleKind::ALL.iter().map(|k| k.name()));
    let mut scores = Vec::new();
    for name in names {
        let path = predictions.join(format!("{}_test.csv", model_stem(name)));
        if !path.exists() {
            continue;
        }
        let (t, m) = reports::read_matrix(&path).map_err(|e| e.in_stage("evaluate"))?;
        if t != times {
            return Err(Error::ShapeMismatch(format!(
                "{} does not cover the test windows of the configured data",
                path.display()
            ))
            .in_stage("evaluate"));
        }
        let report = MetricsReport::compute(&truth, &m).map_err(|e| e.in_stage("evaluate"))?;
        scores.push((name.to_string(), report));
    }
    if scores.is_empty() {
        return Err(Error::EmptyInput(format!("no prediction files in {}", predictions.display())).in_stage("evaluate"));
    }
    mkdir(out)?;
    let mut header = vec!["model".to_string()];
    header.extend(cfg.metrics.iter().map(|m| format!("test_{}", m.label().to_lowercase())));
    let rows: Vec<Vec<String>> = scores
        .iter()
        .map(|(name, r)| {
            std::iter::once(name.clone())
                .chain(cfg.metrics.iter().map(|&m| {
                    fmt_f64(match m {
                        MetricKind::Mape => r.mape,
                        MetricKind::Mae => r.mae,
                        MetricKind::Rmse => r.rmse,
                    })
                }))
                .collect()
        })
        .collect();
    reports::write_table(&out.join("metrics.csv"), &header, &rows)?;
    Ok(scores)
}

/// Writes `bias_variance.csv`, `bagging_variance.csv`, `boosting_curves.csv`
/// and `curve_summary.csv`.
pub fn cmd_bias_variance(cfg: &ExperimentConfig, out: &Path) -> Result<BiasVarianceOutput> {
    let result = pipeline::run_bias_variance(cfg)?;
    mkdir(out)?;
    reports::write_bias_variance(&out.join("bias_variance.csv"), &result.cart)?;
    reports::write_variance_table(&out.join("bagging_variance.csv"), &result.sweep)?;
    reports::write_curves(&out.join("boosting_curves.csv"), &result.curves)?;
    let header = [
        "seed",
        "cart_best",
        "cart_best_stage",
        "extra_best",
        "extra_best_stage",
        "cart_rises_then_falls",
    ]
    .map(String::from);
    let rows: Vec<Vec<String>> = result
        .summaries
        .iter()
        .map(|s| {
            vec![
                s.seed.to_string(),
                fmt_f64(s.cart_best),
                s.cart_best_stage.to_string(),
                fmt_f64(s.extra_best),
                s.extra_best_stage.to_string(),
                s.cart_rises_then_falls.to_string(),
            ]
        })
        .collect();
    reports::write_table(&out.join("curve_summary.csv"), &header, &rows)?;
    Ok(result)
}

/// Writes `lstm_inputs.csv`.
pub fn cmd_ablate_lstm_inputs(
    cfg: &ExperimentConfig,
    out: &Path,
) -> Result<Vec<(String, MetricsReport, MetricsReport)>> {
    let rows = pipeline::lstm_input_ablation(cfg)?;
    mkdir(out)?;
    reports::write_ablation(&out.join("lstm_inputs.csv"), &rows)?;
    Ok(rows)
}

/// Writes the configured series as `load.csv` plus its `holidays.txt`.
pub fn cmd_synth_data(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let seed = cfg.master_seed()?;
    let (series, calendar) = pipeline::load_series(cfg, seed).map_err(|e| e.in_stage("data"))?;
    mkdir(out)?;
    let load = out.join("load.csv");
    let file = fs::File::create(&load).map_err(|e| Error::io(&load, e))?;
    series.write_csv(std::io::BufWriter::new(file))?;
    let holidays = out.join("holidays.txt");
    fs::write(&holidays, calendar.to_text()).map_err(|e| Error::io(&holidays, e))
}
