use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum FermentError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("graph generation failed after {attempts} attempts: {reason}")]
    GenerationFailed { attempts: usize, reason: String },

    /// Listed rows cannot be lifted by any controlled node.
    #[error("infeasible: rows {rows:?} are not reachable from the controlled set")]
    Unreachable { rows: Vec<usize> },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("solver did not converge: {0}")]
    NotConverged(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FermentError {
    /// True for errors that mean "no admissible solution exists".
    pub fn is_infeasible(&self) -> bool {
        matches!(self, FermentError::Unreachable { .. } | FermentError::Infeasible(_))
    }
}

pub type Result<T> = std::result::Result<T, FermentError>;
