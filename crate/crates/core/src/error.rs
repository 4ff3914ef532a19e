use thiserror::Error;

pub type Result<T> = std::result::Result<T, GpError>;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A Gram matrix stayed indefinite after the full jitter ladder.
    #[error("factorization of {what} failed (last jitter {jitter:e})")]
    Factorization { what: String, jitter: f64 },

    #[error("non-finite objective at parameters {params:?}")]
    NonFinite { params: Vec<f64> },

    #[error("partition error: {0}")]
    Partition(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("unsupported archive: {0}")]
    Archive(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn ensure_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(GpError::DimensionMismatch { expected, got })
    }
}
