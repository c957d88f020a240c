use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical failure in {term}: {detail}")]
    Numerical { term: &'static str, detail: String },

    #[error("matrix is not positive definite even after regularization ({0})")]
    Regularization(&'static str),

    #[error("undefined metric: {0}")]
    Undefined(&'static str),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(context: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn numerical(term: &'static str, detail: impl Into<String>) -> Self {
        Error::Numerical {
            term,
            detail: detail.into(),
        }
    }
}
