//! First level of the hybrid: the four submodels and the stacked design they
//! produce for the ensembles.

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, StackingMode};
use crate::data::{SupervisedWindowSet, WindowSample};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;
use crate::submodels::elm::ElmParams;
use crate::submodels::lstm::LstmConfig;
use crate::submodels::{ArimaModel, ElmModel, Forecaster, LstmModel, NusvrModel};

/// Column-block order of the stacked design.
pub const SUBMODEL_NAMES: [&str; 4] = ["ARIMA", "NuSVR", "ELM", "LSTM"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submodels {
    pub arima: ArimaModel,
    pub nusvr: NusvrModel,
    pub elm: ElmModel,
    pub lstm: LstmModel,
}

impl Submodels {
    /// Fits all four on `train`, concurrently. Random submodels draw from
    /// substreams of `seed` named after them.
    pub fn fit(train: &SupervisedWindowSet, cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        let elm_params = ElmParams {
            seed: rng::derive_named(seed, "elm"),
            ..cfg.elm.clone()
        };
        let lstm_config = LstmConfig {
            seed: rng::derive_named(seed, "lstm"),
            ..cfg.lstm.clone()
        };
        let ((arima, nusvr), (elm, lstm)) = rayon::join(
            || {
                rayon::join(
                    || ArimaModel::fit_windows(train).map_err(|e| e.in_stage("ARIMA")),
                    || NusvrModel::fit(train, &cfg.nusvr).map_err(|e| e.in_stage("NuSVR")),
                )
            },
            || {
                rayon::join(
                    || ElmModel::fit(train, &elm_params).map_err(|e| e.in_stage("ELM")),
                    || LstmModel::fit(train, &lstm_config).map_err(|e| e.in_stage("LSTM")),
                )
            },
        );
        Ok(Self {
            arima: arima?,
            nusvr: nusvr?,
            elm: elm?,
            lstm: lstm?,
        })
    }

    /// In [`SUBMODEL_NAMES`] order.
    pub fn forecasters(&self) -> [&dyn Forecaster; 4] {
        [&self.arima, &self.nusvr, &self.elm, &self.lstm]
    }

    /// Per-submodel forecasts, one `N × 24` matrix each.
    pub fn forecast(&self, windows: &[WindowSample]) -> Result<Vec<Matrix>> {
        self.forecasters()
            .iter()
            .map(|m| m.predict_many(windows).map_err(|e| e.in_stage(m.name())))
            .collect()
    }

    /// The juxtaposed forecasts, `N × 96`.
    pub fn stack(&self, windows: &[WindowSample]) -> Result<Matrix> {
        hstack(&self.forecast(windows)?)
    }
}

/// Side-by-side concatenation of matrices with equal row counts.
pub fn hstack(blocks: &[Matrix]) -> Result<Matrix> {
    let Some(first) = blocks.first() else {
        return Err(Error::EmptyInput("no blocks to stack".into()));
    };
    let n = first.rows();
    let width: usize = blocks.iter().map(Matrix::cols).sum();
    let mut data = Vec::with_capacity(n * width);
    for i in 0..n {
        for b in blocks {
            if b.rows() != n {
                return Err(Error::LengthMismatch {
                    left: n,
                    right: b.rows(),
                });
            }
            data.extend_from_slice(b.row(i));
        }
    }
    Matrix::from_vec(n, width, data)
}

/// Columns `[start, end)` of a stacked design came from `submodel`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnBlock {
    pub submodel: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingSplit {
    /// Forecast start of each row.
    pub times: Vec<NaiveDateTime>,
    pub inputs: Matrix,
    pub targets: Matrix,
}

impl StackingSplit {
    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }

    /// Columns of one submodel's block.
    pub fn block(&self, block: &ColumnBlock) -> Matrix {
        let rows: Vec<&[f64]> = self.inputs.iter_rows().map(|r| &r[block.start..block.end]).collect();
        Matrix::from_rows(&rows).expect("rectangular block")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingSet {
    pub train: StackingSplit,
    pub test: StackingSplit,
    pub provenance: Vec<ColumnBlock>,
}

fn provenance(horizon: usize) -> Vec<ColumnBlock> {
    SUBMODEL_NAMES
        .iter()
        .enumerate()
        .map(|(k, name)| ColumnBlock {
            submodel: name.to_string(),
            start: k * horizon,
            end: (k + 1) * horizon,
        })
        .collect()
}

fn split_of(windows: &SupervisedWindowSet, inputs: Matrix) -> Result<StackingSplit> {
    Ok(StackingSplit {
        times: windows.samples.iter().map(WindowSample::target_start_time).collect(),
        inputs,
        targets: Matrix::from_rows(&windows.targets())?,
    })
}

/// Builds the stacked design for both splits. Test rows always come from
/// `submodels`; training rows come from them too (`in_sample`) or from
/// refits that never saw the row's fold (`out_of_fold`).
pub fn build_stacking_set(
    submodels: &Submodels,
    train: &SupervisedWindowSet,
    test: &SupervisedWindowSet,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<StackingSet> {
    let train_inputs = match cfg.stacking.mode {
        StackingMode::InSample => submodels.stack(&train.samples)?,
        StackingMode::OutOfFold => out_of_fold(train, cfg, seed)?,
    };
    Ok(StackingSet {
        train: split_of(train, train_inputs)?,
        test: split_of(test, submodels.stack(&test.samples)?)?,
        provenance: provenance(train.horizon),
    })
}

/// Contiguous folds; fold `k` is forecast by submodels fitted on the others
/// with master seed `rng::derive(seed, k)`.
fn out_of_fold(train: &SupervisedWindowSet, cfg: &ExperimentConfig, seed: u64) -> Result<Matrix> {
    let n = train.len();
    let k = cfg.stacking.folds;
    if k < 2 || k > n {
        return Err(Error::hyper("stacking.folds", format!("must lie in 2..={n}, got {k}")));
    }
    let mut blocks = Vec::with_capacity(k);
    for fold in 0..k {
        let (lo, hi) = (fold * n / k, (fold + 1) * n / k);
        let mut rest = train.slice(0, lo);
        rest.samples.extend(train.slice(hi, n).samples);
        let fitted = Submodels::fit(&rest, cfg, rng::derive(seed, fold as u64))
            .map_err(|e| e.in_stage(&format!("fold {fold}")))?;
        blocks.push(fitted.stack(&train.samples[lo..hi])?);
    }
    let rows: Vec<&[f64]> = blocks.iter().flat_map(|b| b.iter_rows()).collect();
    Matrix::from_rows(&rows)
}
