//! Forecast metrics, the synthetic load generator and the Monte-Carlo
//! bias–variance laboratory.

pub mod bias_variance;
pub mod metrics;
pub mod synthetic;

pub use bias_variance::{BagVarianceRow, BiasVarianceLab, BiasVarianceReport};
pub use metrics::{mae, mape, rmse, MetricsReport};
pub use synthetic::{generate_synthetic, SyntheticLoadSpec};
