use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix is not positive definite (failed after jitter {jitter:e})")]
    NotPositiveDefinite { jitter: f64 },

    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("invalid configuration: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("unknown series kind `{0}` (expected regret-curve, lambda-hist or threshold-trace)")]
    UnknownSeries(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
