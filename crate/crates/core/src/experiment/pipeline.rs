//! The end-to-end hybrid: data → submodels → stacked design → ensembles →
//! scores. Everything here is a pure function of the configuration and its
//! master seed; [`super::commands`] writes the results to disk.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DataSource, EnsembleKind, ExperimentConfig, StackingMode};
use super::ensembles::{self, fit_ensemble, HourlyEnsemble};
use super::reports::{CurvePair, ScoreRow};
use super::stacking::{build_stacking_set, StackingSet, StackingSplit, Submodels, SUBMODEL_NAMES};
use crate::boosting::{self, BaseKind, BoostParams};
use crate::data::{
    make_windows, split_train_test, HolidayCalendar, HourlyLoadSeries, InputFeatures, SupervisedWindowSet, HORIZON,
    LOOKBACK, STRIDE,
};
use crate::error::{Error, Result};
use crate::eval::{generate_synthetic, BagVarianceRow, BiasVarianceLab, BiasVarianceReport, MetricsReport};
use crate::matrix::Matrix;
use crate::rng;
use crate::submodels::lstm::{LstmConfig, LstmModel};
use crate::submodels::Forecaster;
use crate::tree;

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub series: HourlyLoadSeries,
    pub calendar: HolidayCalendar,
    pub train: SupervisedWindowSet,
    pub test: SupervisedWindowSet,
}

/// The hourly series named by `data`: generated from the substream `"data"`
/// of `seed`, or read from CSV.
pub fn load_series(cfg: &ExperimentConfig, seed: u64) -> Result<(HourlyLoadSeries, HolidayCalendar)> {
    match cfg.data.source {
        None => Err(Error::Config("missing required key `data.source`".into())),
        Some(DataSource::Synthetic) => {
            let mut spec = cfg.data.synthetic.clone();
            spec.seed = rng::derive_named(seed, "data");
            generate_synthetic(&spec)
        }
        Some(DataSource::Csv) => {
            let path = cfg
                .data
                .path
                .as_ref()
                .ok_or_else(|| Error::Config("missing required key `data.path`".into()))?;
            let calendar = match &cfg.data.holidays {
                Some(h) => HolidayCalendar::load(h)?,
                None => HolidayCalendar::default(),
            };
            Ok((HourlyLoadSeries::load_csv(path, &calendar)?, calendar))
        }
    }
}

pub fn prepare_data(cfg: &ExperimentConfig, seed: u64) -> Result<PreparedData> {
    let (series, calendar) = load_series(cfg, seed)?;
    let windows = make_windows(&series, LOOKBACK, HORIZON, STRIDE)?;
    let (train, test) = split_train_test(&windows, cfg.data.train_days)?;
    Ok(PreparedData {
        series,
        calendar,
        train,
        test,
    })
}

/// Forecasts of one model on both splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub name: &'static str,
    pub train: Matrix,
    pub test: Matrix,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub data: PreparedData,
    pub submodels: Submodels,
    pub stacking: StackingSet,
    /// Fitted ensembles in report order.
    pub ensembles: Vec<HourlyEnsemble>,
    /// Submodels first, then ensembles, in report order.
    pub predictions: Vec<Predictions>,
    pub scores: Vec<ScoreRow>,
}

impl RunOutput {
    pub fn score(&self, name: &str) -> Option<&ScoreRow> {
        self.scores.iter().find(|s| s.name == name)
    }

    pub fn ensemble(&self, kind: EnsembleKind) -> Option<&HourlyEnsemble> {
        self.ensembles.iter().find(|e| e.kind == kind)
    }
}

/// Configured ensembles in report order, each at most once.
pub fn selected_ensembles(cfg: &ExperimentConfig) -> Vec<EnsembleKind> {
    EnsembleKind::ALL
        .into_iter()
        .filter(|k| cfg.ensembles.contains(k))
        .collect()
}

/// Fits the configured ensembles on the stacked training design.
pub fn fit_ensembles(stacking: &StackingSet, cfg: &ExperimentConfig, seed: u64) -> Result<Vec<HourlyEnsemble>> {
    let (x, y) = (&stacking.train.inputs, &stacking.train.targets);
    let mut fitted: Vec<HourlyEnsemble> = Vec::new();
    for kind in selected_ensembles(cfg) {
        // The ElasticNet members double as WGTB warm starts when the two
        // would be fitted identically anyway.
        let warm = match kind {
            EnsembleKind::Wgtb if ensembles::warm_start_compatible(cfg) => fitted
                .iter()
                .find(|e| e.kind == EnsembleKind::ElasticNet)
                .and_then(HourlyEnsemble::elasticnets),
            _ => None,
        };
        fitted.push(fit_ensemble(kind, x, y, cfg, seed, warm.as_deref())?);
    }
    Ok(fitted)
}

pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let seed = cfg.master_seed()?;
    let data = prepare_data(cfg, seed).map_err(|e| e.in_stage("data"))?;
    let submodels = Submodels::fit(&data.train, cfg, seed).map_err(|e| e.in_stage("submodels"))?;
    let stacking =
        build_stacking_set(&submodels, &data.train, &data.test, cfg, seed).map_err(|e| e.in_stage("stacking"))?;
    let ensembles = fit_ensembles(&stacking, cfg, seed).map_err(|e| e.in_stage("ensembles"))?;

    let mut predictions = Vec::new();
    let train_blocks = match cfg.stacking.mode {
        StackingMode::InSample => stacking.provenance.iter().map(|b| stacking.train.block(b)).collect(),
        StackingMode::OutOfFold => submodels.forecast(&data.train.samples)?,
    };
    for ((name, train), block) in SUBMODEL_NAMES.iter().zip(train_blocks).zip(&stacking.provenance) {
        predictions.push(Predictions {
            name,
            train,
            test: stacking.test.block(block),
        });
    }
    for e in &ensembles {
        predictions.push(Predictions {
            name: e.name(),
            train: e.predict(&stacking.train.inputs)?,
            test: e.predict(&stacking.test.inputs)?,
        });
    }
    let scores = score_all(&predictions, &stacking).map_err(|e| e.in_stage("evaluate"))?;
    Ok(RunOutput {
        data,
        submodels,
        stacking,
        ensembles,
        predictions,
        scores,
    })
}

pub fn score_all(predictions: &[Predictions], stacking: &StackingSet) -> Result<Vec<ScoreRow>> {
    predictions
        .iter()
        .map(|p| {
            Ok(ScoreRow {
                name: p.name,
                train: MetricsReport::compute(&stacking.train.targets, &p.train)?,
                test: MetricsReport::compute(&stacking.test.targets, &p.test)?,
            })
        })
        .collect()
}

/// Relative margin used by [`rises_then_falls`].
pub const RISE_FALL_MARGIN: f64 = 0.01;

/// First index of the smallest value, and that value.
pub fn curve_minimum(curve: &[f64]) -> Option<(usize, f64)> {
    curve
        .iter()
        .copied()
        .enumerate()
        .fold(None, |best, (i, v)| match best {
            Some((_, b)) if b <= v => best,
            _ => Some((i, v)),
        })
}

/// Whether the curve climbs from an earlier low to its peak by more than
/// [`RISE_FALL_MARGIN`] (relative) and afterwards drops more than the same
/// margin below that peak.
pub fn rises_then_falls(curve: &[f64]) -> bool {
    let Some((peak, top)) = curve
        .iter()
        .copied()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, v)| match best {
            Some((_, b)) if b >= v => best,
            _ => Some((i, v)),
        })
    else {
        return false;
    };
    let before = curve[..peak].iter().copied().fold(f64::INFINITY, f64::min);
    let after = curve[peak + 1..].iter().copied().fold(f64::INFINITY, f64::min);
    top > before * (1.0 + RISE_FALL_MARGIN) && after < top * (1.0 - RISE_FALL_MARGIN)
}

/// Pads a curve that lost points to skipped stages by repeating its last
/// value, up to `len` points.
fn pad(mut curve: Vec<f64>, len: usize) -> Vec<f64> {
    if let Some(&last) = curve.last() {
        curve.resize(len, last);
    }
    curve
}

/// WGTB with single CART stages against WGTB with bagged ExtraTree stages,
/// both from the same warm start, without early stopping. Per-stage train
/// and validation MSE are averaged over the configured target hours.
pub fn boosting_curves(train: &StackingSplit, cfg: &ExperimentConfig, seed: u64) -> Result<CurvePair> {
    let cc = &cfg.bias_variance.curve;
    let t = train.targets.cols();
    if cc.hours.is_empty() {
        return Err(Error::Config("bias_variance.curve.hours must not be empty".into()));
    }
    if let Some(&h) = cc.hours.iter().find(|&&h| h >= t) {
        return Err(Error::Config(format!("bias_variance.curve.hours: hour {h} is out of range")));
    }
    let len = cc.max_stages + 1;
    let base = BoostParams {
        max_stages: cc.max_stages,
        validation_fraction: cc.validation_fraction,
        early_stop: None,
        ..cfg.wgtb.clone()
    };
    let per_hour: Vec<[Vec<f64>; 4]> = cc
        .hours
        .par_iter()
        .map(|&h| {
            let y = train.targets.column(h);
            let warm = boosting::fit_warm_start(&train.inputs, &y, cc.validation_fraction, &base.elastic_grid)?;
            let s = ensembles::hour_seed(seed, EnsembleKind::Wgtb, h);
            let mut out: [Vec<f64>; 4] = Default::default();
            for (k, (kind, bag)) in [(BaseKind::Cart, 1), (BaseKind::ExtratreeBag, cc.bag_size)].into_iter().enumerate() {
                let p = BoostParams {
                    base_kind: kind,
                    bag_size: bag,
                    seed: s,
                    ..base.clone()
                };
                let m = boosting::fit_wgtb_from_warm(&train.inputs, &y, &p, warm.clone())?;
                out[2 * k] = pad(m.train_curve(), len);
                out[2 * k + 1] = pad(m.validation_curve().ok_or(Error::EmptyCurve)?, len);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mean = |k: usize| -> Vec<f64> {
        (0..len)
            .map(|i| per_hour.iter().map(|c| c[k][i]).sum::<f64>() / per_hour.len() as f64)
            .collect()
    };
    Ok(CurvePair {
        cart_train: mean(0),
        cart_val: mean(1),
        extra_train: mean(2),
        extra_val: mean(3),
    })
}

/// Best validation errors and the shape of the CART curve for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub seed: u64,
    pub cart_best: f64,
    pub cart_best_stage: usize,
    pub extra_best: f64,
    pub extra_best_stage: usize,
    pub cart_rises_then_falls: bool,
}

impl CurveSummary {
    pub fn of(seed: u64, c: &CurvePair) -> Result<Self> {
        let (cs, cb) = curve_minimum(&c.cart_val).ok_or(Error::EmptyCurve)?;
        let (es, eb) = curve_minimum(&c.extra_val).ok_or(Error::EmptyCurve)?;
        Ok(Self {
            seed,
            cart_best: cb,
            cart_best_stage: cs,
            extra_best: eb,
            extra_best_stage: es,
            cart_rises_then_falls: rises_then_falls(&c.cart_val),
        })
    }
}

/// The stacked benchmark for run seed `seed`: data, submodels, design.
pub fn stacked_benchmark(cfg: &ExperimentConfig, seed: u64) -> Result<StackingSet> {
    let data = prepare_data(cfg, seed).map_err(|e| e.in_stage("data"))?;
    let submodels = Submodels::fit(&data.train, cfg, seed).map_err(|e| e.in_stage("submodels"))?;
    build_stacking_set(&submodels, &data.train, &data.test, cfg, seed).map_err(|e| e.in_stage("stacking"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasVarianceOutput {
    pub cart: BiasVarianceReport,
    pub sweep: Vec<BagVarianceRow>,
    /// Curves averaged over the benchmark runs.
    pub curves: CurvePair,
    pub summaries: Vec<CurveSummary>,
}

pub fn lab(cfg: &ExperimentConfig, seed: u64) -> Result<BiasVarianceLab> {
    let bv = &cfg.bias_variance;
    if bv.synthetic.ar != 0.0 {
        return Err(Error::Config(
            "bias_variance.synthetic.ar must be 0: the decomposition needs independent noise".into(),
        ));
    }
    let mut spec = bv.synthetic.clone();
    spec.seed = rng::derive_named(seed, "lab");
    Ok(BiasVarianceLab {
        spec,
        train_hours: bv.train_hours,
        n_eval: bv.n_eval,
    })
}

/// CART decomposition, bagging sweep, and the boosting-curve ablation over
/// `curve.seeds` benchmark runs with master seeds `seed, seed + 1, …`.
pub fn run_bias_variance(cfg: &ExperimentConfig) -> Result<BiasVarianceOutput> {
    cfg.validate()?;
    let seed = cfg.master_seed()?;
    let bv = &cfg.bias_variance;
    let lab = lab(cfg, seed)?;
    let cart_params = bv.cart;
    let cart = lab
        .estimate(
            move |x: &Matrix, y: &[f64], xe: &Matrix, s: u64| {
                let t = tree::fit_cart(x, y, &cart_params.with_seed(s))?;
                Ok(t.predict_matrix(xe))
            },
            bv.resamples,
        )
        .map_err(|e| e.in_stage("decomposition"))?;
    let sweep = lab
        .bag_variance_sweep(&bv.bag_sizes, bv.outer, bv.inner, &bv.sweep_tree)
        .map_err(|e| e.in_stage("bagging sweep"))?;
    if bv.curve.seeds == 0 {
        return Err(Error::Config("bias_variance.curve.seeds must be at least 1".into()));
    }
    let mut per_seed = Vec::with_capacity(bv.curve.seeds);
    let mut summaries = Vec::with_capacity(bv.curve.seeds);
    for i in 0..bv.curve.seeds {
        let s = seed.wrapping_add(i as u64);
        let stacking = stacked_benchmark(cfg, s)?;
        let c = boosting_curves(&stacking.train, cfg, s).map_err(|e| e.in_stage("boosting curves"))?;
        summaries.push(CurveSummary::of(s, &c)?);
        per_seed.push(c);
    }
    let avg = |f: fn(&CurvePair) -> &Vec<f64>| -> Vec<f64> {
        let len = f(&per_seed[0]).len();
        (0..len)
            .map(|k| per_seed.iter().map(|c| f(c)[k]).sum::<f64>() / per_seed.len() as f64)
            .collect()
    };
    let curves = CurvePair {
        cart_train: avg(|c| &c.cart_train),
        cart_val: avg(|c| &c.cart_val),
        extra_train: avg(|c| &c.extra_train),
        extra_val: avg(|c| &c.extra_val),
    };
    Ok(BiasVarianceOutput {
        cart,
        sweep,
        curves,
        summaries,
    })
}

/// LSTM under each of the six calendar-input configurations; rows are
/// `(label, train, test)` metrics in [`InputFeatures::ablation_grid`] order.
pub fn lstm_input_ablation(cfg: &ExperimentConfig) -> Result<Vec<(String, MetricsReport, MetricsReport)>> {
    cfg.validate()?;
    let seed = cfg.master_seed()?;
    let data = prepare_data(cfg, seed).map_err(|e| e.in_stage("data"))?;
    let truth_train = Matrix::from_rows(&data.train.targets())?;
    let truth_test = Matrix::from_rows(&data.test.targets())?;
    InputFeatures::ablation_grid()
        .into_iter()
        .map(|features| {
            let label = features.label();
            let config = LstmConfig {
                features,
                seed: rng::derive_named(seed, "lstm"),
                ..cfg.lstm.clone()
            };
            let model = LstmModel::fit(&data.train, &config).map_err(|e| e.in_stage(&label))?;
            let tr = MetricsReport::compute(&truth_train, &model.predict_many(&data.train.samples)?)?;
            let te = MetricsReport::compute(&truth_test, &model.predict_many(&data.test.samples)?)?;
            Ok((label, tr, te))
        })
        .collect()
}
