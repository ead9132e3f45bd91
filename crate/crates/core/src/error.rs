use std::path::PathBuf;

use thiserror::Error;

use crate::assembly::FieldState;
use crate::solver::LinearSolveStats;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("mesh generation failed: {0}")]
    MeshGeneration(String),

    #[error("degenerate cell {cell}: {reason}")]
    DegenerateCell { cell: usize, reason: String },

    #[error("unsupported kinetics: {0}")]
    UnsupportedKinetics(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("linear solver did not converge after {} iterations (relative residual {:.3e})", .0.iterations, .0.relative_residual)]
    SolverFailure(LinearSolveStats),

    #[error("linear system is not positive definite (breakdown at iteration {iteration})")]
    NotPositiveDefinite { iteration: usize },

    #[error("Picard iteration did not converge in step {step} after {} iterations (last increment {:.3e})", .history.len(), .history.last().copied().unwrap_or(f64::NAN))]
    PicardNonConvergence {
        step: usize,
        /// Relative increment of every iteration.
        history: Vec<f64>,
        last_iterate: Box<FieldState>,
    },

    #[error("non-finite values in step {step}")]
    NonFinite { step: usize },

    #[error("relative error undefined: reference field has zero norm")]
    UndefinedError,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("reference generation failed: {0}")]
    Reference(String),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
