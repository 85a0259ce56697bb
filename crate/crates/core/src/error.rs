use thiserror::Error;

/// Errors surfaced by the toolkit.
///
/// Variants are grouped so callers (the CLI in particular) can map them to
/// coarse exit categories: data problems vs. numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("power flow did not converge after {iterations} iterations (mismatch {mismatch:.3e})")]
    NonConvergence { iterations: usize, mismatch: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
}

/// Coarse failure category used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Data,
    Numerical,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Schema(_)
            | Error::Validation(_)
            | Error::Dimension(_)
            | Error::Corrupt(_)
            | Error::Io(_)
            | Error::Empty(_) => ErrorCategory::Data,
            Error::NonConvergence { .. } | Error::Singular(_) | Error::NonFinite(_) => {
                ErrorCategory::Numerical
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
