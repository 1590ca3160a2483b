//! End-to-end experiments: TOML configuration, the stacked two-level
//! pipeline, model files, CSV reports and the subcommands built on them.
//!
//! All randomness flows from the configuration's master seed through named
//! substreams (`"data"`, `"elm"`, `"lstm"`, one per ensemble and hour), so a
//! run is reproducible bit for bit at any thread count.

pub mod commands;
pub mod config;
pub mod ensembles;
pub mod persist;
pub mod pipeline;
pub mod reports;
pub mod stacking;

pub use config::{DataSource, EnsembleKind, ExperimentConfig, MetricKind, StackingMode};
pub use ensembles::{HourModel, HourlyEnsemble};
pub use persist::{load_model, save_model, Persist, FORMAT_VERSION};
pub use pipeline::{run_pipeline, CurveSummary, Predictions, RunOutput};
pub use reports::{CurvePair, ScoreRow};
pub use stacking::{StackingSet, StackingSplit, Submodels, SUBMODEL_NAMES};
