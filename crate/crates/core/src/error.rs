use thiserror::Error;

/// Errors produced by the herding library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("matrix is not symmetric (entry ({row}, {col}) differs by {diff})")]
    NotSymmetric { row: usize, col: usize, diff: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value at position {0}")]
    NonFinite(usize),

    #[error("empirical distribution has no points")]
    EmptyDistribution,

    #[error("empty input")]
    EmptyInput,

    #[error("ragged rows: row {row} has {got} columns, expected {expected}")]
    RaggedRows { row: usize, expected: usize, got: usize },

    #[error("unsupported moment order {0} (supported: 1, 2, 3)")]
    UnsupportedOrder(u32),

    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("invalid bandwidth {0}: must be positive and finite")]
    InvalidBandwidth(f64),

    #[error("gradient ascent diverged at herding step {step}: objective fell from {from} to {to}")]
    AscentDiverged { step: usize, from: f64, to: f64 },

    #[error("candidate set is empty")]
    EmptyCandidates,

    #[error("herding error is undefined before the first sample")]
    EmptyHistory,

    #[error("sample set is empty")]
    EmptySamples,

    #[error("error trace is degenerate (no positive errors to fit)")]
    DegenerateTrace,

    #[error("kernel mismatch: function uses sigma={function}, state uses sigma={state}")]
    KernelMismatch { function: f64, state: f64 },

    #[error("parse error at row {row}: {message}")]
    ParseError { row: usize, message: String },

    #[error("file is empty")]
    EmptyFile,

    #[error("non-binary label {value:?} at row {row}")]
    NonBinaryLabel { row: usize, value: String },

    #[error("data is degenerate: every covariance eigenvalue is below the floor")]
    DegenerateData,

    #[error("theta set is empty")]
    EmptyThetaSet,

    #[error("set is empty")]
    EmptySet,

    #[error("invalid configuration: {field}: {message}")]
    InvalidConfig { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures of the numerical machinery as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::AscentDiverged { .. }
                | Error::DegenerateData
                | Error::DegenerateTrace
                | Error::NonFinite(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
