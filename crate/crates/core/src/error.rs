//! Error types shared across the library.

use thiserror::Error;

/// Errors produced by case parsing, model construction, and attack
/// construction.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed case-file input; carries the 1-based line number.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Input data violates a structural requirement of the grid model.
    #[error("model error: {0}")]
    Model(String),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A factorization or solve failed numerically.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// An uninformative sensor forced a zero attack variance, which would
    /// shrink the support below the requested sparsity.
    #[error("degenerate attack at round {round}: sensor {sensor} has w*sigma^2 = 1")]
    DegenerateAttack { round: usize, sensor: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
