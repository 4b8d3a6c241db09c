//! Crate-wide error type. The CLI maps these variants onto exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input, parameter out of range, point outside a certified domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A structural hypothesis on the equation failed hard (not a report flag).
    #[error("hypothesis violation: {0}")]
    Hypothesis(String),

    /// Numerical failure: lost contraction, quadrature tail too large, NaN.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Configuration file problems; message carries the field/line context.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn hypothesis(msg: impl Into<String>) -> Self {
        Error::Hypothesis(msg.into())
    }
    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
