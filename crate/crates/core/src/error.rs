use thiserror::Error;

/// Errors produced by the solvers, diagnostics and experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("function {index} returned non-finite value {value} at {point:?}")]
    NonFiniteValue {
        index: usize,
        value: f64,
        point: Vec<f64>,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point lies outside the domain (violation {violation:e})")]
    OutsideDomain { violation: f64 },

    #[error("invalid step-size schedule: {0}")]
    Schedule(String),

    #[error("function {0} has no closed-form gradient")]
    GradientUnavailable(usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("zero total averaging weight")]
    ZeroWeight,

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
