//! Hybrid short-term load forecasting.
//!
//! Four inference submodels (ARIMA, ν-SVR, ELM, LSTM) each map a week of
//! hourly load to a day-ahead forecast. Their juxtaposed outputs feed a
//! second-level ensemble, Warm-start Gradient Tree Boosting: an ElasticNet
//! warm start followed by stochastic boosting of bagged extremely randomized
//! trees. The [`eval`] module carries the metrics and a Monte-Carlo
//! bias–variance laboratory on a synthetic generator with a known Bayes
//! predictor.
//!
//! Layout:
//!
//! - [`data`]: CSV ingest, calendar features, min-max scaling, windowing.
//! - [`tree`]: CART and ExtraTree regression trees.
//! - [`forest`]: bagging, random forest, ExtraTrees and AdaBoost.R2 baselines.
//! - [`linear`]: ElasticNet by coordinate descent plus grid search.
//! - [`boosting`]: SGTB and WGTB over a shared staged-additive engine.
//! - [`submodels`]: the four forecasters behind [`submodels::Forecaster`].
//! - [`eval`]: metrics, synthetic load, bias–variance estimation.
//! - [`experiment`]: configuration, stacking, persistence and the end-to-end
//!   commands used by the `stlf` binary.

pub mod boosting;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod forest;
pub mod linear;
pub mod matrix;
pub mod rng;
pub mod submodels;
pub mod tree;

pub use boosting::{BaseKind, BoostParams, BoostedModel, EarlyStopping};
pub use data::{
    CalendarFeatures, HolidayCalendar, HourlyLoadSeries, InputFeatures, NormalizerState,
    SupervisedWindowSet, WindowSample,
};
pub use error::{Error, Result};
pub use eval::{BiasVarianceReport, MetricsReport, SyntheticLoadSpec};
pub use forest::{Forest, ForestKind};
pub use linear::{ElasticNetGrid, ElasticNetModel};
pub use matrix::Matrix;
pub use submodels::Forecaster;
pub use tree::{RegressionTree, TreeParams};
