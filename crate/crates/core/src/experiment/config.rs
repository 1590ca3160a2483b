//! Experiment configuration.
//!
//! A TOML file whose keys may be written dotted (`data.source = "csv"`) or as
//! tables. Every section is optional except `data.source`; the master seed
//! may come from the file or from the command line. Sections reject unknown
//! keys so that a typo fails loudly instead of silently keeping a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::boosting::{BaseKind, BoostParams, EarlyStopping};
use crate::error::{Error, Result};
use crate::eval::SyntheticLoadSpec;
use crate::linear::{ElasticNetGrid, SolverOptions};
use crate::submodels::elm::ElmParams;
use crate::submodels::lstm::LstmConfig;
use crate::submodels::nusvr::NusvrParams;
use crate::tree::TreeParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    /// Output directory; the `--out` flag takes precedence.
    pub output: Option<PathBuf>,
    pub data: DataConfig,
    pub nusvr: NusvrParams,
    pub elm: ElmParams,
    pub lstm: LstmConfig,
    pub stacking: StackingConfig,
    pub elasticnet: ElasticNetConfig,
    pub sgtb: BoostParams,
    pub wgtb: BoostParams,
    pub bagging: ForestConfig,
    pub extratree: ForestConfig,
    pub random_forest: RandomForestConfig,
    pub adaboost: AdaboostConfig,
    /// Ensembles to fit, in any order; reports always follow the fixed order.
    pub ensembles: Vec<EnsembleKind>,
    pub metrics: Vec<MetricKind>,
    pub bias_variance: BiasVarianceConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let early = BoostParams {
            validation_fraction: 0.1,
            early_stop: Some(EarlyStopping { patience: 10 }),
            ..BoostParams::default()
        };
        Self {
            seed: None,
            output: None,
            data: DataConfig::default(),
            nusvr: NusvrParams::default(),
            elm: ElmParams::default(),
            lstm: LstmConfig::default(),
            stacking: StackingConfig::default(),
            elasticnet: ElasticNetConfig::default(),
            sgtb: BoostParams {
                base_kind: BaseKind::Cart,
                bag_size: 1,
                ..early.clone()
            },
            wgtb: early,
            bagging: ForestConfig::default(),
            extratree: ForestConfig::default(),
            random_forest: RandomForestConfig::default(),
            adaboost: AdaboostConfig::default(),
            ensembles: EnsembleKind::ALL.to_vec(),
            metrics: MetricKind::ALL.to_vec(),
            bias_variance: BiasVarianceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: Option<DataSource>,
    /// Hourly load CSV (`timestamp,load`), for `source = "csv"`.
    pub path: Option<PathBuf>,
    /// Holiday dates, one `YYYY-MM-DD` per line.
    pub holidays: Option<PathBuf>,
    pub train_days: usize,
    /// Generator for `source = "synthetic"`; its seed is derived from the
    /// master seed and the value here is ignored.
    pub synthetic: SyntheticLoadSpec,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: None,
            path: None,
            holidays: None,
            train_days: 300,
            synthetic: SyntheticLoadSpec::benchmark(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StackingMode {
    /// Ensembles train on the submodels' predictions for their own training
    /// windows.
    InSample,
    /// Training-window predictions come from submodels refitted without the
    /// fold that contains the window.
    OutOfFold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StackingConfig {
    pub mode: StackingMode,
    /// Contiguous folds for `out_of_fold`.
    pub folds: usize,
}

impl Default for StackingConfig {
    fn default() -> Self {
        Self {
            mode: StackingMode::InSample,
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElasticNetConfig {
    pub alphas: Vec<f64>,
    pub rhos: Vec<f64>,
    pub max_iters: usize,
    pub tol: f64,
    /// Trailing share of the training rows used to score the grid.
    pub validation_fraction: f64,
}

impl Default for ElasticNetConfig {
    fn default() -> Self {
        let grid = ElasticNetGrid::default();
        Self {
            alphas: grid.alphas,
            rhos: grid.rhos,
            max_iters: grid.solver.max_iters,
            tol: grid.solver.tol,
            validation_fraction: 0.1,
        }
    }
}

impl ElasticNetConfig {
    pub fn grid(&self) -> ElasticNetGrid {
        ElasticNetGrid {
            alphas: self.alphas.clone(),
            rhos: self.rhos.clone(),
            solver: SolverOptions {
                max_iters: self.max_iters,
                tol: self.tol,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub tree: TreeParams,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            tree: TreeParams::unlimited(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomForestConfig {
    pub n_trees: usize,
    /// Features tried per node; `None` uses a third of the inputs.
    pub max_features: Option<usize>,
    pub tree: TreeParams,
}

impl Default for RandomForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_features: None,
            tree: TreeParams::unlimited(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaboostConfig {
    pub n_rounds: usize,
    pub tree: TreeParams,
}

impl Default for AdaboostConfig {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            tree: TreeParams::default(),
        }
    }
}

/// Second-level models, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EnsembleKind {
    ElasticNet,
    #[serde(rename = "SGTB")]
    Sgtb,
    #[serde(rename = "WGTB")]
    Wgtb,
    Bagging,
    ExtraTree,
    RandomForest,
    Adaboost,
}

impl EnsembleKind {
    pub const ALL: [Self; 7] = [
        Self::ElasticNet,
        Self::Sgtb,
        Self::Wgtb,
        Self::Bagging,
        Self::ExtraTree,
        Self::RandomForest,
        Self::Adaboost,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::ElasticNet => "ElasticNet",
            Self::Sgtb => "SGTB",
            Self::Wgtb => "WGTB",
            Self::Bagging => "Bagging",
            Self::ExtraTree => "ExtraTree",
            Self::RandomForest => "RandomForest",
            Self::Adaboost => "Adaboost",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(name))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Mape,
    Mae,
    Rmse,
}

impl MetricKind {
    pub const ALL: [Self; 3] = [Self::Mape, Self::Mae, Self::Rmse];

    pub fn label(self) -> &'static str {
        match self {
            Self::Mape => "MAPE",
            Self::Mae => "MAE",
            Self::Rmse => "RMSE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasVarianceConfig {
    /// Generator for the decomposition; white noise keeps σ² exact.
    pub synthetic: SyntheticLoadSpec,
    pub train_hours: usize,
    pub n_eval: usize,
    /// Training-set draws for the CART decomposition.
    pub resamples: usize,
    pub cart: TreeParams,
    pub bag_sizes: Vec<usize>,
    /// Data draws and, per draw, seed draws for the bagging sweep.
    pub outer: usize,
    pub inner: usize,
    pub sweep_tree: TreeParams,
    pub curve: CurveConfig,
}

impl Default for BiasVarianceConfig {
    fn default() -> Self {
        Self {
            synthetic: SyntheticLoadSpec::default(),
            train_hours: 672,
            n_eval: 64,
            resamples: 200,
            cart: TreeParams::unlimited(),
            bag_sizes: vec![1, 10, 50],
            outer: 20,
            inner: 10,
            sweep_tree: TreeParams::unlimited().with_depth(Some(8)),
            curve: CurveConfig::default(),
        }
    }
}

/// CART-versus-ExtraTree boosting ablation on the stacked benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveConfig {
    /// Benchmark runs, with master seeds `seed, seed + 1, …`.
    pub seeds: usize,
    pub max_stages: usize,
    /// Bag size of the ExtraTree variant; the CART variant always uses one tree.
    pub bag_size: usize,
    /// Target hours whose per-hour curves are averaged.
    pub hours: Vec<usize>,
    pub validation_fraction: f64,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            seeds: 10,
            max_stages: 200,
            bag_size: 10,
            hours: (0..24).step_by(4).collect(),
            validation_fraction: 0.1,
        }
    }
}

impl ExperimentConfig {
    /// Parses `text` as overrides on top of [`ExperimentConfig::default`],
    /// table by table, so a partially written section keeps the experiment
    /// defaults for the keys it leaves out.
    pub fn from_toml(text: &str) -> Result<Self> {
        let user: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        let mut merged = toml::Table::try_from(Self::default()).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, user);
        toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        // Relative data paths resolve against the config file's directory.
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data.path, &mut cfg.data.holidays].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Fails on the first missing or inconsistent key, naming it.
    pub fn validate(&self) -> Result<()> {
        self.master_seed()?;
        match self.data.source {
            None => return Err(missing("data.source")),
            Some(DataSource::Csv) => {
                let path = self.data.path.as_ref().ok_or_else(|| missing("data.path"))?;
                if !path.exists() {
                    return Err(Error::Config(format!("data.path {} does not exist", path.display())));
                }
            }
            Some(DataSource::Synthetic) => self.data.synthetic.validate()?,
        }
        if let Some(h) = &self.data.holidays {
            if !h.exists() {
                return Err(Error::Config(format!("data.holidays {} does not exist", h.display())));
            }
        }
        if self.data.train_days == 0 {
            return Err(Error::Config("data.train_days must be at least 1".into()));
        }
        if self.stacking.mode == StackingMode::OutOfFold && self.stacking.folds < 2 {
            return Err(Error::Config("stacking.folds must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.elasticnet.validation_fraction) {
            return Err(Error::Config("elasticnet.validation_fraction must lie in [0, 1)".into()));
        }
        if self.metrics.is_empty() {
            return Err(Error::Config("metrics must name at least one metric".into()));
        }
        self.sgtb.validate()?;
        self.wgtb.validate()?;
        self.lstm.validate()?;
        Ok(())
    }

    pub fn master_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| missing("seed"))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

fn missing(key: &str) -> Error {
    Error::Config(format!("missing required key `{key}`"))
}
