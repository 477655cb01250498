use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("column {column} has zero variance")]
    ZeroVariance { column: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("matrix is singular")]
    Singular,

    #[error("{0} did not converge")]
    NoConvergence(&'static str),

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("pair set is incomplete or has duplicates: {0}")]
    IncompletePairSet(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: usize, message: String },

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
