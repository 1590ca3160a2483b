//! Staged additive boosting under squared loss.
//!
//! One engine serves both variants:
//!
//! - SGTB: constant init `mean(y)`, one CART per stage;
//! - WGTB: ElasticNet warm start, a bag of `B` ExtraTrees per stage.
//!
//! Each stage draws `⌊ηN⌋` rows without replacement, fits the base learner to
//! the residuals on that subsample, line-searches `γ` on the same subsample
//! and adds `ν·γ·h` to every prediction. The training curve holds one point
//! per fitted stage, index 0 being the initial model.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{self, BaseLearner, Forest};
use crate::linear::{self, ElasticNetGrid, ElasticNetModel};
use crate::matrix::Matrix;
use crate::rng;
use crate::tree::{self, RegressionTree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKind {
    Cart,
    ExtratreeBag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EarlyStopping {
    /// Stages without a new validation minimum before the monitor fires.
    pub patience: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostParams {
    pub shrinkage: f64,
    pub max_stages: usize,
    pub subsample: f64,
    pub base_kind: BaseKind,
    pub bag_size: usize,
    pub tree: TreeParams,
    pub seed: u64,
    /// Trailing fraction of the rows held out for monitoring. Zero disables it.
    pub validation_fraction: f64,
    pub early_stop: Option<EarlyStopping>,
    /// Grid for the warm start; ignored by SGTB.
    pub elastic_grid: ElasticNetGrid,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            shrinkage: 0.05,
            max_stages: 70,
            subsample: 0.8,
            base_kind: BaseKind::ExtratreeBag,
            bag_size: 10,
            tree: TreeParams::default(),
            seed: 0,
            validation_fraction: 0.0,
            early_stop: None,
            elastic_grid: ElasticNetGrid::default(),
        }
    }
}

impl BoostParams {
    pub fn sgtb() -> Self {
        Self {
            base_kind: BaseKind::Cart,
            bag_size: 1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(Error::hyper("shrinkage", format!("must lie in (0, 1], got {}", self.shrinkage)));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::hyper("subsample", format!("must lie in (0, 1], got {}", self.subsample)));
        }
        if self.bag_size == 0 {
            return Err(Error::hyper("bag_size", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::hyper(
                "validation_fraction",
                format!("must lie in [0, 1), got {}", self.validation_fraction),
            ));
        }
        if let Some(es) = self.early_stop {
            if es.patience == 0 {
                return Err(Error::hyper("patience", "must be at least 1"));
            }
            if self.validation_fraction == 0.0 {
                return Err(Error::hyper("early_stop", "needs a positive validation_fraction"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Init {
    Constant { value: f64 },
    ElasticNet { model: ElasticNetModel },
}

impl Init {
    #[inline]
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        match self {
            Init::Constant { value } => *value,
            Init::ElasticNet { model } => model.predict_row(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StageLearner {
    Tree { tree: RegressionTree },
    Bag { forest: Forest },
}

impl StageLearner {
    #[inline]
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        match self {
            StageLearner::Tree { tree } => tree.predict_row(x),
            StageLearner::Bag { forest } => forest.predict_row(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub gamma: f64,
    pub learner: StageLearner,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub train_mse: f64,
    pub val_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub init: Init,
    pub stages: Vec<Stage>,
    pub params: BoostParams,
    pub n_features: usize,
    /// Every stage that was fitted, including any cut away by early stopping.
    pub training_curve: Vec<CurvePoint>,
}

impl BoostedModel {
    pub fn n_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                actual: x.len(),
            });
        }
        Ok(self.predict_row(x))
    }

    #[inline]
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.predict_truncated(x, self.stages.len())
    }

    /// Prediction using only the first `k` stages.
    pub fn predict_truncated(&self, x: &[f64], k: usize) -> f64 {
        let nu = self.params.shrinkage;
        let mut acc = self.init.predict_row(x);
        for s in self.stages.iter().take(k) {
            acc += nu * s.gamma * s.learner.predict_row(x);
        }
        acc
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows().map(|r| self.predict_row(r)).collect()
    }

    pub fn truncate(&mut self, k: usize) {
        self.stages.truncate(k);
    }

    pub fn validation_curve(&self) -> Option<Vec<f64>> {
        self.training_curve.iter().map(|p| p.val_mse).collect()
    }

    pub fn train_curve(&self) -> Vec<f64> {
        self.training_curve.iter().map(|p| p.train_mse).collect()
    }
}

/// `y − F`, the negative gradient of `½(y − F)²`.
pub fn negative_gradient(y: &[f64], f: &[f64]) -> Result<Vec<f64>> {
    if y.len() != f.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: f.len(),
        });
    }
    Ok(y.iter().zip(f).map(|(a, b)| a - b).collect())
}

/// Closed-form minimizer of `Σ ½(y − F − γh)²`.
pub fn line_search_gamma(y: &[f64], f: &[f64], h: &[f64]) -> Result<f64> {
    if y.len() != f.len() || y.len() != h.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: if y.len() != f.len() { f.len() } else { h.len() },
        });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for ((yi, fi), hi) in y.iter().zip(f).zip(h) {
        num += hi * (yi - fi);
        den += hi * hi;
    }
    if den == 0.0 {
        return Err(Error::ZeroBasePrediction);
    }
    Ok(num / den)
}

/// Index of the best stage seen before the patience monitor fires. Ties go to
/// the earliest stage.
pub fn early_stop_scan(curve: &[f64], patience: usize) -> Result<usize> {
    if curve.is_empty() {
        return Err(Error::EmptyCurve);
    }
    if patience == 0 {
        return Err(Error::hyper("patience", "must be at least 1"));
    }
    let mut best = 0;
    let mut since = 0;
    for (i, &v) in curve.iter().enumerate().skip(1) {
        if v < curve[best] {
            best = i;
            since = 0;
        } else {
            since += 1;
            if since >= patience {
                break;
            }
        }
    }
    Ok(best)
}

/// SGTB: constant init, base learner per `params.base_kind` (CART by default).
pub fn fit_sgtb(x: &Matrix, y: &[f64], params: &BoostParams) -> Result<BoostedModel> {
    params.validate()?;
    let (xt, yt, val) = split_validation(x, y, params.validation_fraction)?;
    let init = Init::Constant {
        value: yt.iter().sum::<f64>() / yt.len() as f64,
    };
    fit_from_init(&xt, yt, val, init, params)
}

/// WGTB: ElasticNet warm start picked on the validation slice, then boosting.
///
/// Without a validation slice the grid is scored on the trailing 10% of the
/// rows and the winning cell is refit on all of them.
pub fn fit_wgtb(x: &Matrix, y: &[f64], params: &BoostParams) -> Result<BoostedModel> {
    params.validate()?;
    let enet = fit_warm_start(x, y, params.validation_fraction, &params.elastic_grid)?;
    fit_wgtb_from_warm(x, y, params, enet)
}

/// The ElasticNet that [`fit_wgtb`] starts from, for the same rows, slice
/// fraction and grid.
pub fn fit_warm_start(
    x: &Matrix,
    y: &[f64],
    validation_fraction: f64,
    grid: &ElasticNetGrid,
) -> Result<ElasticNetModel> {
    let (xt, yt, val) = split_validation(x, y, validation_fraction)?;
    warm_start(&xt, yt, val.as_ref().map(|(a, b)| (a, *b)), grid)
}

/// Boosting stages on top of a warm start fitted elsewhere, typically by
/// [`fit_warm_start`] with matching settings.
pub fn fit_wgtb_from_warm(
    x: &Matrix,
    y: &[f64],
    params: &BoostParams,
    warm: ElasticNetModel,
) -> Result<BoostedModel> {
    params.validate()?;
    let (xt, yt, val) = split_validation(x, y, params.validation_fraction)?;
    fit_from_init(&xt, yt, val, Init::ElasticNet { model: warm }, params)
}

/// WGTB with an explicit monitoring set instead of a trailing slice.
pub fn fit_wgtb_monitored(
    x: &Matrix,
    y: &[f64],
    x_val: &Matrix,
    y_val: &[f64],
    params: &BoostParams,
) -> Result<BoostedModel> {
    let p = BoostParams {
        validation_fraction: 0.0,
        early_stop: None,
        ..params.clone()
    };
    p.validate()?;
    let enet = warm_start(x, y, Some((x_val, y_val)), &params.elastic_grid)?;
    let mut p = p;
    p.early_stop = params.early_stop;
    fit_from_init(x, y, Some((x_val.clone(), y_val)), Init::ElasticNet { model: enet }, &p)
}

fn warm_start(
    x: &Matrix,
    y: &[f64],
    val: Option<(&Matrix, &[f64])>,
    grid: &ElasticNetGrid,
) -> Result<ElasticNetModel> {
    match val {
        Some((xv, yv)) => linear::grid_search_elasticnet(x, y, xv, yv, grid).map(|(m, _)| m),
        None => {
            let n = x.rows();
            let cut = n - (n / 10).max(1).min(n - 1);
            if cut == 0 || cut == n {
                let (a, r) = (grid.alphas.first(), grid.rhos.first());
                let (Some(&a), Some(&r)) = (a, r) else {
                    return Err(Error::EmptyGrid);
                };
                return linear::fit_elasticnet(x, y, a, r, grid.solver.max_iters, grid.solver.tol);
            }
            let (best, _) = linear::grid_search_elasticnet(
                &x.slice_rows(0, cut),
                &y[..cut],
                &x.slice_rows(cut, n),
                &y[cut..],
                grid,
            )?;
            linear::fit_elasticnet(x, y, best.alpha, best.rho, grid.solver.max_iters, grid.solver.tol)
        }
    }
}

type Split<'a> = (Matrix, &'a [f64], Option<(Matrix, &'a [f64])>);

fn split_validation<'a>(x: &Matrix, y: &'a [f64], fraction: f64) -> Result<Split<'a>> {
    tree::check_xy(x, y)?;
    let n = x.rows();
    if fraction == 0.0 {
        return Ok((x.clone(), y, None));
    }
    let n_val = ((n as f64 * fraction).round() as usize).max(1);
    if n_val >= n {
        return Err(Error::EmptySplit(format!(
            "validation slice of {n_val} leaves no training rows out of {n}"
        )));
    }
    let cut = n - n_val;
    Ok((
        x.slice_rows(0, cut),
        &y[..cut],
        Some((x.slice_rows(cut, n), &y[cut..])),
    ))
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / a.len() as f64
}

/// The shared stage loop.
pub fn fit_from_init(
    x: &Matrix,
    y: &[f64],
    val: Option<(Matrix, &[f64])>,
    init: Init,
    params: &BoostParams,
) -> Result<BoostedModel> {
    tree::check_xy(x, y)?;
    let n = x.rows();
    let nu = params.shrinkage;
    let mut f: Vec<f64> = x.iter_rows().map(|r| init.predict_row(r)).collect();
    let mut fv: Option<Vec<f64>> = val
        .as_ref()
        .map(|(xv, _)| xv.iter_rows().map(|r| init.predict_row(r)).collect());
    let val_mse = |fv: &Option<Vec<f64>>| match (fv, &val) {
        (Some(p), Some((_, yv))) => Some(mse(p, yv)),
        _ => None,
    };
    let mut curve = vec![CurvePoint {
        train_mse: mse(&f, y),
        val_mse: val_mse(&fv),
    }];
    let mut stages = Vec::new();
    let k = ((params.subsample * n as f64).floor() as usize).clamp(1, n);
    let mut best = 0usize;
    let mut since = 0usize;

    for m in 0..params.max_stages {
        let stage_seed = rng::derive(params.seed, m as u64);
        let mut idx: Vec<usize> = if k == n {
            (0..n).collect()
        } else {
            let mut r = rng::stream(rng::derive_named(stage_seed, "subsample"));
            index::sample(&mut r, n, k).into_vec()
        };
        idx.sort_unstable();
        let xs = x.select_rows(&idx);
        let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let fs: Vec<f64> = idx.iter().map(|&i| f[i]).collect();
        let rs = negative_gradient(&ys, &fs)?;
        let tree_params = params.tree.with_seed(rng::derive_named(stage_seed, "learner"));
        let learner = match params.base_kind {
            BaseKind::Cart => StageLearner::Tree {
                tree: tree::fit_cart(&xs, &rs, &tree_params)?,
            },
            BaseKind::ExtratreeBag => StageLearner::Bag {
                forest: forest::fit_bag(
                    &xs,
                    &rs,
                    params.bag_size,
                    BaseLearner::ExtraTree,
                    false,
                    &tree_params,
                    tree_params.seed,
                )?,
            },
        };
        let hs: Vec<f64> = xs.iter_rows().map(|r| learner.predict_row(r)).collect();
        let gamma = match line_search_gamma(&ys, &fs, &hs) {
            Ok(g) => g,
            Err(Error::ZeroBasePrediction) => continue,
            Err(e) => return Err(e),
        };
        for (fi, row) in f.iter_mut().zip(x.iter_rows()) {
            *fi += nu * gamma * learner.predict_row(row);
        }
        if let (Some(p), Some((xv, _))) = (fv.as_mut(), &val) {
            for (fi, row) in p.iter_mut().zip(xv.iter_rows()) {
                *fi += nu * gamma * learner.predict_row(row);
            }
        }
        stages.push(Stage { gamma, learner });
        let point = CurvePoint {
            train_mse: mse(&f, y),
            val_mse: val_mse(&fv),
        };
        curve.push(point);
        if let (Some(es), Some(v)) = (params.early_stop, point.val_mse) {
            let i = curve.len() - 1;
            if v < curve[best].val_mse.unwrap_or(f64::INFINITY) {
                best = i;
                since = 0;
            } else {
                since += 1;
                if since >= es.patience {
                    break;
                }
            }
        }
    }
    if params.early_stop.is_some() && val.is_some() {
        stages.truncate(best);
    }
    Ok(BoostedModel {
        init,
        stages,
        params: params.clone(),
        n_features: x.cols(),
        training_curve: curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(seed: u64, n: usize) -> (Matrix, Vec<f64>) {
        use rand::Rng;
        let mut r = rng::stream(seed);
        let rows: Vec<[f64; 3]> = (0..n).map(|_| [r.random(), r.random(), r.random()]).collect();
        let y = rows
            .iter()
            .map(|v| (6.0 * v[0]).sin() + 2.0 * v[1] * v[2] + 0.1 * r.random::<f64>())
            .collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn gradient_and_gamma_examples() {
        assert_eq!(negative_gradient(&[5.0], &[3.0]).unwrap(), vec![2.0]);
        assert_eq!(negative_gradient(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
        assert!(negative_gradient(&[1.0], &[]).is_err());
        let y = [3.0, 1.0, -2.0];
        let f = [1.0, 1.5, 0.0];
        let r: Vec<f64> = negative_gradient(&y, &f).unwrap();
        assert!((line_search_gamma(&y, &f, &r).unwrap() - 1.0).abs() < 1e-15);
        let h2: Vec<f64> = r.iter().map(|v| 2.0 * v).collect();
        assert!((line_search_gamma(&y, &f, &h2).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(
            line_search_gamma(&y, &f, &[0.0; 3]),
            Err(Error::ZeroBasePrediction)
        ));
    }

    #[test]
    fn scan_examples() {
        assert_eq!(early_stop_scan(&[5.0, 4.0, 3.0, 2.0], 1).unwrap(), 3);
        assert_eq!(early_stop_scan(&[5.0, 4.0, 3.0, 4.0, 5.0, 6.0], 2).unwrap(), 2);
        assert_eq!(early_stop_scan(&[1.0, 1.0, 1.0], 5).unwrap(), 0);
        assert!(matches!(early_stop_scan(&[], 2), Err(Error::EmptyCurve)));
        // A later, deeper minimum is missed with small patience and found with large.
        let c = [3.0, 2.0, 2.5, 2.7, 2.6, 1.0];
        assert_eq!(early_stop_scan(&c, 2).unwrap(), 1);
        assert_eq!(early_stop_scan(&c, 10).unwrap(), 5);
    }

    #[test]
    fn zero_stages_is_the_init() {
        let (x, y) = fixture(1, 50);
        let p = BoostParams {
            max_stages: 0,
            ..BoostParams::sgtb()
        };
        let m = fit_sgtb(&x, &y, &p).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!(m.predict_matrix(&x).iter().all(|&v| v == mean));

        let p = BoostParams {
            max_stages: 0,
            ..BoostParams::default()
        };
        let w = fit_wgtb(&x, &y, &p).unwrap();
        let Init::ElasticNet { model } = &w.init else { panic!("warm start expected") };
        assert_eq!(w.predict_matrix(&x), model.predict_matrix(&x));
    }

    #[test]
    fn manual_stage_sum() {
        let m = BoostedModel {
            init: Init::Constant { value: 0.0 },
            stages: vec![Stage {
                gamma: 1.0,
                learner: StageLearner::Tree {
                    tree: RegressionTree::constant(10.0, 1),
                },
            }],
            params: BoostParams::sgtb(),
            n_features: 1,
            training_curve: vec![],
        };
        assert!((m.predict(&[0.3]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(m.predict_truncated(&[0.3], 0), 0.0);
        assert!(m.predict(&[0.3, 1.0]).is_err());
    }

    #[test]
    fn single_full_stage_interpolates() {
        let (x, y) = fixture(2, 40);
        let p = BoostParams {
            shrinkage: 1.0,
            subsample: 1.0,
            max_stages: 1,
            tree: TreeParams::unlimited(),
            ..BoostParams::sgtb()
        };
        let m = fit_sgtb(&x, &y, &p).unwrap();
        assert!(m.training_curve[1].train_mse < 1e-20);
    }

    #[test]
    fn deterministic_and_truncation_consistent() {
        let (x, y) = fixture(3, 80);
        let p = BoostParams {
            max_stages: 15,
            seed: 9,
            ..BoostParams::default()
        };
        let a = fit_wgtb(&x, &y, &p).unwrap();
        let b = fit_wgtb(&x, &y, &p).unwrap();
        assert_eq!(a, b);
        for k in [0, 5, a.n_stages()] {
            let pred: Vec<f64> = x.iter_rows().map(|r| a.predict_truncated(r, k)).collect();
            assert_eq!(mse(&pred, &y), a.training_curve[k].train_mse);
        }
    }

    #[test]
    fn early_stopping_truncates_to_best() {
        let (x, y) = fixture(4, 100);
        let p = BoostParams {
            max_stages: 200,
            shrinkage: 0.5,
            tree: TreeParams::default().with_depth(Some(6)),
            validation_fraction: 0.2,
            early_stop: Some(EarlyStopping { patience: 5 }),
            ..BoostParams::sgtb()
        };
        let m = fit_sgtb(&x, &y, &p).unwrap();
        let val = m.validation_curve().unwrap();
        assert_eq!(m.n_stages(), early_stop_scan(&val, 5).unwrap());
    }

    #[test]
    fn invalid_params() {
        let (x, y) = fixture(5, 10);
        for p in [
            BoostParams { shrinkage: 0.0, ..BoostParams::default() },
            BoostParams { subsample: 1.5, ..BoostParams::default() },
            BoostParams { bag_size: 0, ..BoostParams::default() },
            BoostParams { early_stop: Some(EarlyStopping { patience: 3 }), ..BoostParams::default() },
        ] {
            assert!(fit_wgtb(&x, &y, &p).is_err());
        }
    }
}
