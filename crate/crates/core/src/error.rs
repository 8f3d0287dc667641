use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, NmfError>;

#[derive(Debug, Error)]
pub enum NmfError {
    /// A divergence or update was asked to work outside the domain where it
    /// is defined. Usually fixed by a positive `kappa` shift.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    Shape { context: &'static str, expected: (usize, usize), got: (usize, usize) },

    #[error("column {column} of W has zero norm")]
    ZeroColumn { column: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: PathBuf, line: usize, column: usize, message: String },

    #[error("negative entry {value} at row {row}, column {column}")]
    Negative { row: usize, column: usize, value: f64 },

    #[error("non-finite entry at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("densifying a {rows}x{cols} matrix exceeds the limit of {limit} entries")]
    DensifyLimit { rows: usize, cols: usize, limit: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_shape(context: &'static str, expected: (usize, usize), got: (usize, usize)) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(NmfError::Shape { context, expected, got })
    }
}
