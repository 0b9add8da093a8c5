use std::path::PathBuf;

use thiserror::Error;

use crate::estimator::EstimationResult;

/// Errors produced anywhere in the simulate / estimate / score pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown temperature unit `{0}` (expected K, F or C)")]
    UnknownUnit(String),

    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("failed to parse {what}: {reason}")]
    Parse { what: String, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("simulation diverged at step {step} (room {room}); reduce delta_t")]
    Unstable { step: usize, room: usize },

    #[error("constraints are infeasible: {0}")]
    Infeasible(String),

    #[error("solver stopped after {} iterations without converging", .0.stats.iterations)]
    IterationLimit(Box<EstimationResult>),

    #[error("window mismatch: {0}")]
    WindowMismatch(String),

    #[error("gap of {gap_hours:.4} h in column `{column}` between grid steps {start_step} and {end_step} exceeds the interpolation limit")]
    Gap {
        column: String,
        start_step: usize,
        end_step: usize,
        gap_hours: f64,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(what: impl Into<String>, reason: impl ToString) -> Self {
        Error::Parse {
            what: what.into(),
            reason: reason.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse classification used by the command-line front end for exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Infeasible(_) | Error::IterationLimit(_) | Error::Unstable { .. } => {
                ErrorKind::Solver
            }
            Error::Io { .. } => ErrorKind::Io,
            Error::Csv(e) if e.is_io_error() => ErrorKind::Io,
            _ => ErrorKind::Validation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Solver,
    Io,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
