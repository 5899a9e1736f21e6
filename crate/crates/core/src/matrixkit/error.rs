use thiserror::Error;

/// Failures raised by the dense linear-algebra layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("matrices and vectors must have at least one row and one column (got {rows}x{cols})")]
    Empty { rows: usize, cols: usize },

    #[error("non-finite entry {value} at position {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("every input column is negligible; the dictionary is empty")]
    AllColumnsNegligible,

    #[error("rows are numerically dependent: condition estimate {condition:.3e} exceeds {limit:.3e}")]
    RankDeficientRows { condition: f64, limit: f64 },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:.3e})")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:.3e})")]
    NotPsd { eigenvalue: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("decomposition failed: {0}")]
    Decomposition(String),
}

pub type Result<T, E = LinalgError> = std::result::Result<T, E>;

pub(crate) fn mismatch(op: &'static str, expected: impl ToString, got: impl ToString) -> LinalgError {
    LinalgError::DimensionMismatch {
        op,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
