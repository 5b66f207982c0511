use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("batch needs at least 2 pairs, got {0}")]
    TooFewSamples(usize),

    #[error("{function} is undefined at x = {x}")]
    Domain { function: &'static str, x: f64 },

    #[error("{function} overflowed at x = {x}")]
    Overflow { function: &'static str, x: f64 },

    #[error("normalization head got a zero-norm input (sample {sample})")]
    Singular { sample: usize },

    #[error("multiplier search did not converge: {0}")]
    RootFinding(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("non-finite value at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },

    #[error("parse error: {0}")]
    Parse(String),
}

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
