//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by numeric kernels, training and data handling.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the stated domain of a function.
    #[error("{func}: {msg}")]
    Domain { func: &'static str, msg: String },

    /// Vector or matrix dimensions do not line up.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// The variance of a Student's-t quantity is undefined for nu <= 2.
    #[error("variance undefined for degrees of freedom {nu} (requires nu > 2)")]
    UndefinedVariance { nu: f64 },

    /// An iterative expansion did not reach its tolerance.
    #[error("continued fraction for I_x(a, b) did not converge within {max_iter} iterations (x = {x}, a = {a}, b = {b})")]
    NoConvergence {
        x: f64,
        a: f64,
        b: f64,
        max_iter: usize,
    },

    /// A computation produced a non-finite value where one is not allowed.
    #[error("non-finite {what} in {context}")]
    NonFinite {
        what: &'static str,
        context: &'static str,
    },

    /// CSV cell-level failure with its position (1-based row and column).
    #[error("csv: {msg} at row {row}, column {col}")]
    Csv { row: usize, col: usize, msg: String },

    /// CSV file-level failure.
    #[error("csv: {0}")]
    CsvFile(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    /// Online training aborts with the index of the offending sample attached.
    #[error("training failed at sample {index}: {source}")]
    AtSample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    /// Invalid configuration (widths, fractions, run counts).
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(func: &'static str, msg: impl Into<String>) -> Self {
        Error::Domain {
            func,
            msg: msg.into(),
        }
    }

    /// Attach a sample index to an error raised inside the training loop.
    pub fn at_sample(self, index: usize) -> Self {
        Error::AtSample {
            index,
            source: Box::new(self),
        }
    }
}
