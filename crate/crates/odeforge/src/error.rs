use std::path::PathBuf;

use thiserror::Error;

/// Coarse classification used by callers (e.g. the CLI) to map errors to
/// distinct exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad parameters or configuration supplied by the caller.
    Config,
    /// Problems with input data or on-disk artifacts.
    Data,
    /// Numerical failure (singular systems, escaping trajectories, ...).
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("non-numeric value {value:?} in {path} at row {row}, column {column}")]
    NonNumeric {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },

    #[error("column {column:?} not found in {path}")]
    MissingColumn { path: PathBuf, column: String },

    #[error("selected column {column:?} of {path} contains no values")]
    EmptyColumn { path: PathBuf, column: String },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("series too short: need at least {needed} samples, got {got}")]
    SeriesTooShort { needed: usize, got: usize },

    #[error("series has zero variance; correlation is undefined")]
    ZeroVariance,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("selection is empty: {0}")]
    EmptySelection(String),

    #[error(
        "RBF grid would retain {count} centers, above the cap of {cap}; \
         try a coarser grid, e.g. delta_grid = {suggested_delta}"
    )]
    CenterCapExceeded {
        count: usize,
        cap: usize,
        suggested_delta: f64,
    },

    #[error("normal equations are singular; use a regularization lambda > 0")]
    SingularSystem,

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("trajectory escaped (reached |X| = {radius}) at t = {time}; try a different initial state")]
    TrajectoryEscaped { time: f64, radius: f64 },

    #[error("scaling parameters of model and dataset do not match")]
    ScalingMismatch,

    #[error("model file schema mismatch: expected version {expected}, found {found}")]
    SchemaVersion { expected: u32, found: String },
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            Io { .. } | Csv { .. } | NonNumeric { .. } | MissingColumn { .. }
            | EmptyColumn { .. } | SeriesTooShort { .. } | SchemaVersion { .. } => {
                ErrorCategory::Data
            }
            InvalidParam(_) | DimensionMismatch { .. } | EmptySelection(_)
            | CenterCapExceeded { .. } => ErrorCategory::Config,
            ZeroVariance | SingularSystem | NonFinite(_) | TrajectoryEscaped { .. }
            | ScalingMismatch => ErrorCategory::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
