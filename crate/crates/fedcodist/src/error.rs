//! Error type shared across the simulator.

use thiserror::Error;

/// All failure modes of the simulator, named by category.
///
/// The CLI maps each variant to its category name on stderr so scripted
/// pipelines can branch on the failure kind.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter vectors have incompatible layouts: {0}")]
    IncompatibleParams(String),

    #[error("non-finite value encountered: {0}")]
    NumericalError(String),

    #[error("softmax temperature must be positive, got {0}")]
    InvalidTemperature(f64),

    #[error("missing supervision for the selected loss: {0}")]
    MissingSupervision(String),

    #[error("batches have incompatible shapes: {0}")]
    IncompatibleBatches(String),

    #[error("cannot sample {requested} clients from a pool of {available}")]
    PoolExhausted { requested: usize, available: usize },

    #[error("client {0} has no training examples")]
    EmptyClient(u64),

    #[error("no client deltas to aggregate")]
    NothingToAggregate,

    #[error("round {round} is past the end of a {total_rounds}-round schedule")]
    ScheduleExhausted { round: u64, total_rounds: u64 },

    #[error("merge factor alpha must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),

    #[error("distillation data set is empty")]
    NoDistillationData,

    #[error("not enough examples: {0}")]
    NotEnoughExamples(String),

    #[error("degenerate pool split: {0}")]
    DegeneratePool(String),

    #[error("cannot evaluate on an empty batch")]
    EmptyEvaluation,

    #[error("config parse error: {0}")]
    ConfigSyntaxError(String),

    #[error("invalid config field `{field}`: {reason}")]
    ConfigValidationError { field: String, reason: String },

    #[error("dataset format error at line {line}: {reason}")]
    DatasetFormatError { line: usize, reason: String },

    #[error("metrics format error at line {line}: {reason}")]
    MetricsFormatError { line: usize, reason: String },

    #[error("write failed: {0}")]
    WriteError(#[from] std::io::Error),
}

impl Error {
    /// Stable category name used in CLI error output.
    pub fn category(&self) -> &'static str {
        match self {
            Error::IncompatibleParams(_) => "IncompatibleParams",
            Error::NumericalError(_) => "NumericalError",
            Error::InvalidTemperature(_) => "InvalidTemperature",
            Error::MissingSupervision(_) => "MissingSupervision",
            Error::IncompatibleBatches(_) => "IncompatibleBatches",
            Error::PoolExhausted { .. } => "PoolExhausted",
            Error::EmptyClient(_) => "EmptyClient",
            Error::NothingToAggregate => "NothingToAggregate",
            Error::ScheduleExhausted { .. } => "ScheduleExhausted",
            Error::InvalidAlpha(_) => "InvalidAlpha",
            Error::NoDistillationData => "NoDistillationData",
            Error::NotEnoughExamples(_) => "NotEnoughExamples",
            Error::DegeneratePool(_) => "DegeneratePool",
            Error::EmptyEvaluation => "EmptyEvaluation",
            Error::ConfigSyntaxError(_) => "ConfigSyntaxError",
            Error::ConfigValidationError { .. } => "ConfigValidationError",
            Error::DatasetFormatError { .. } => "DatasetFormatError",
            Error::MetricsFormatError { .. } => "MetricsFormatError",
            Error::WriteError(_) => "WriteError",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
