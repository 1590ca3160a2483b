use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("missing timestamp: expected {expected}, found {found} (line {line})")]
    MissingTimestamp {
        line: usize,
        expected: String,
        found: String,
    },

    #[error("non-positive load {value} at line {line}")]
    NonPositiveLoad { line: usize, value: f64 },

    #[error("degenerate range: all values equal {0}")]
    DegenerateRange(f64),

    #[error("series too short: need at least {required} points, got {actual}")]
    SeriesTooShort { required: usize, actual: usize },

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("zero ground-truth value at sample {sample}, step {step}")]
    ZeroTruth { sample: usize, step: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid hyperparameter `{name}`: {reason}")]
    InvalidHyperparameter { name: String, reason: String },

    #[error("empty hyperparameter grid")]
    EmptyGrid,

    #[error("empty validation curve")]
    EmptyCurve,

    #[error("all base predictions are zero; stage skipped")]
    ZeroBasePrediction,

    #[error("AdaBoost.R2 average loss {loss} >= 0.5 in round {round}")]
    DegenerateLoss { round: usize, loss: f64 },

    #[error("insufficient history: need {required} points, got {actual}")]
    InsufficientHistory { required: usize, actual: usize },

    #[error("kernel matrix is not positive semi-definite (curvature {0})")]
    NonPositiveDefiniteKernel(f64),

    #[error("solver did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("training loss became non-finite at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("model file format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: String, expected: u32 },

    #[error("corrupt model file: {0}")]
    CorruptFile(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model factory failed on resample {index}: {source}")]
    FactoryFailure {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn hyper(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidHyperparameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }

    /// Wraps an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
