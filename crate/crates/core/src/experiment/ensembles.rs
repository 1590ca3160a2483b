//! Second level: one scalar model per target hour over the stacked design.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{EnsembleKind, ExperimentConfig};
use crate::boosting::{self, BoostParams, BoostedModel};
use crate::error::{Error, Result};
use crate::forest::{self, BaseLearner, Forest};
use crate::linear::ElasticNetModel;
use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HourModel {
    ElasticNet { model: ElasticNetModel },
    Boosted { model: BoostedModel },
    Forest { model: Forest },
}

impl HourModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        match self {
            HourModel::ElasticNet { model } => model.predict_row(x),
            HourModel::Boosted { model } => model.predict_row(x),
            HourModel::Forest { model } => model.predict_row(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyEnsemble {
    pub kind: EnsembleKind,
    pub n_features: usize,
    pub hours: Vec<HourModel>,
}

impl HourlyEnsemble {
    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    /// `N × hours` forecasts for an `N × n_features` stacked design.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                actual: x.cols(),
            });
        }
        let t = self.hours.len();
        let mut out = Matrix::zeros(x.rows(), t);
        for (i, row) in x.iter_rows().enumerate() {
            for (h, m) in self.hours.iter().enumerate() {
                out.set(i, h, m.predict_row(row));
            }
        }
        if !out.is_finite() {
            return Err(Error::NonFinite(format!("{} forecast", self.name())));
        }
        Ok(out)
    }

    /// Boosted members, if this is a boosting ensemble.
    pub fn boosted(&self) -> impl Iterator<Item = &BoostedModel> {
        self.hours.iter().filter_map(|m| match m {
            HourModel::Boosted { model } => Some(model),
            _ => None,
        })
    }

    /// Warm starts carried by the members: the ElasticNet models themselves,
    /// or the inits of WGTB members.
    pub fn elasticnets(&self) -> Option<Vec<ElasticNetModel>> {
        self.hours
            .iter()
            .map(|m| match m {
                HourModel::ElasticNet { model } => Some(model.clone()),
                _ => None,
            })
            .collect()
    }
}

/// Seed of hour `h` of ensemble `kind` under master seed `seed`.
pub fn hour_seed(seed: u64, kind: EnsembleKind, h: usize) -> u64 {
    rng::derive(rng::derive_named(seed, kind.name()), h as u64)
}

fn boost_params(base: &BoostParams, seed: u64) -> BoostParams {
    BoostParams {
        seed,
        ..base.clone()
    }
}

/// Fits `kind` on `x` (N × d) against each column of `y` (N × T), hours in
/// parallel. `warm`, when given, supplies per-hour ElasticNet warm starts
/// for WGTB; callers pass it only when it was fitted with the WGTB slice
/// fraction and grid, so the result equals a from-scratch fit.
pub fn fit_ensemble(
    kind: EnsembleKind,
    x: &Matrix,
    y: &Matrix,
    cfg: &ExperimentConfig,
    seed: u64,
    warm: Option<&[ElasticNetModel]>,
) -> Result<HourlyEnsemble> {
    if x.rows() != y.rows() {
        return Err(Error::LengthMismatch {
            left: x.rows(),
            right: y.rows(),
        });
    }
    let t = y.cols();
    if let Some(w) = warm {
        if w.len() != t {
            return Err(Error::LengthMismatch { left: t, right: w.len() });
        }
    }
    let d = x.cols();
    let hours = (0..t)
        .into_par_iter()
        .map(|h| {
            let yh = y.column(h);
            let s = hour_seed(seed, kind, h);
            let model = match kind {
                EnsembleKind::ElasticNet => HourModel::ElasticNet {
                    model: boosting::fit_warm_start(
                        x,
                        &yh,
                        cfg.elasticnet.validation_fraction,
                        &cfg.elasticnet.grid(),
                    )?,
                },
                EnsembleKind::Sgtb => HourModel::Boosted {
                    model: boosting::fit_sgtb(x, &yh, &boost_params(&cfg.sgtb, s))?,
                },
                EnsembleKind::Wgtb => {
                    let p = boost_params(&cfg.wgtb, s);
                    let model = match warm {
                        Some(w) => boosting::fit_wgtb_from_warm(x, &yh, &p, w[h].clone())?,
                        None => boosting::fit_wgtb(x, &yh, &p)?,
                    };
                    HourModel::Boosted { model }
                }
                EnsembleKind::Bagging => HourModel::Forest {
                    model: forest::fit_bag(
                        x,
                        &yh,
                        cfg.bagging.n_trees,
                        BaseLearner::Cart,
                        true,
                        &cfg.bagging.tree,
                        s,
                    )?,
                },
                EnsembleKind::ExtraTree => HourModel::Forest {
                    model: forest::fit_extratrees(x, &yh, cfg.extratree.n_trees, &cfg.extratree.tree, s)?,
                },
                EnsembleKind::RandomForest => {
                    let rf = &cfg.random_forest;
                    let k = rf.max_features.unwrap_or((d / 3).max(1));
                    HourModel::Forest {
                        model: forest::fit_random_forest(x, &yh, rf.n_trees, k, &rf.tree, s)?,
                    }
                }
                EnsembleKind::Adaboost => HourModel::Forest {
                    model: forest::fit_adaboost_r2(x, &yh, cfg.adaboost.n_rounds, &cfg.adaboost.tree, s)?,
                },
            };
            Ok(model)
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage(kind.name()))?;
    Ok(HourlyEnsemble {
        kind,
        n_features: d,
        hours,
    })
}

/// Whether ElasticNet members can stand in for the WGTB warm start.
pub fn warm_start_compatible(cfg: &ExperimentConfig) -> bool {
    cfg.elasticnet.validation_fraction == cfg.wgtb.validation_fraction && cfg.elasticnet.grid() == cfg.wgtb.elastic_grid
}
