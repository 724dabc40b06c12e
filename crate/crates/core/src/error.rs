use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bounds: lo = {lo} exceeds hi = {hi}")]
    InvalidBounds { lo: f64, hi: f64 },

    #[error("invalid radius {0}: must be positive")]
    InvalidRadius(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("empty input vector")]
    EmptyInput,

    #[error("invalid block layout: {0}")]
    BlockLayout(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("ragged row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("cannot parse {value:?} at row {row}, column {column}")]
    Parse {
        row: usize,
        column: usize,
        value: String,
    },

    #[error("exact evaluation requires a finite-sum or deterministic objective")]
    UnsupportedExactEvaluation,

    #[error("invalid sample batch: {0}")]
    Batch(String),

    #[error("inner-iteration budget exceeded at outer iteration {k}: {requested} > cap {cap}")]
    BudgetExceeded { k: usize, requested: u64, cap: u64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("no iterate within feasibility tolerance (smallest violation seen {min_violation:e})")]
    EmptyFeasibleSet { min_violation: f64 },

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("log-domain error: value {value} at index {index} is not positive")]
    LogDomain { index: usize, value: f64 },

    #[error("accuracy {eps:e} not reached (best {best:e})")]
    UnreachableAccuracy { eps: f64, best: f64 },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Exit code used by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::Parameter(_)
            | Error::InvalidBounds { .. }
            | Error::InvalidRadius(_)
            | Error::BlockLayout(_)
            | Error::Schema(_) => 2,
            Error::NonConvergence { .. }
            | Error::BudgetExceeded { .. }
            | Error::EmptyFeasibleSet { .. }
            | Error::UnreachableAccuracy { .. }
            | Error::LogDomain { .. }
            | Error::AssumptionViolated(_) => 3,
            _ => 1,
        }
    }
}
