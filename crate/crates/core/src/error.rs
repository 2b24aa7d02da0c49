use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("unparseable numeric cell at row {row}, column `{column}`: {value:?}")]
    ParseCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("non-finite values in rows {rows:?}")]
    NonFinite { rows: Vec<usize> },
    #[error("column `{0}` is not categorical")]
    NotCategorical(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid hyperparameter `{name}`: {reason}")]
    Hyperparameter { name: String, reason: String },
    #[error("model cannot answer quantile level {tau}")]
    UnsupportedQuantile { tau: f64 },
    #[error("fitting ensemble member {member} failed: {source}")]
    Member {
        member: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("row {row}: {message}")]
    Schema { row: usize, message: String },
    #[error("degenerate calibration: {0}")]
    Degenerate(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
