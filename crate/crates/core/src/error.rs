use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    Dimension {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("divergence undefined: q({class}) = 0 where p({class}) > 0")]
    DivergenceUndefined { class: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("degenerate instance: {0}")]
    DegenerateInstance(String),

    #[error("pi weight undefined for the all-zeros perturbation")]
    UndefinedWeight,

    #[error("requested {requested} features but only {available} are available")]
    Range { requested: usize, available: usize },

    #[error("singular normal equations in ridge solve (alpha = {alpha})")]
    Singular { alpha: f64 },

    #[error("loss diverged at epoch {epoch} with learning rate {learning_rate}")]
    Divergence { epoch: usize, learning_rate: f64 },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("model backend failed: {message}")]
    Backend {
        message: String,
        diagnostics: String,
    },

    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn dim(expected: usize, actual: usize, context: &'static str) -> Self {
        Error::Dimension {
            expected,
            actual,
            context,
        }
    }
}
