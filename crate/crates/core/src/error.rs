use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected n = {expected}, got n = {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid splitting: {0}")]
    InvalidSplitting(String),

    #[error("point lies outside the active domain")]
    OutsideDomain,

    #[error(
        "restriction is not intrinsic {declared}-Lipschitz: nodes {first} -> {second} have ratio {ratio}"
    )]
    NotLipschitz {
        declared: f64,
        ratio: f64,
        first: usize,
        second: usize,
    },

    #[error("order violated at node {node}: {detail}")]
    OrderViolated { node: usize, detail: String },

    #[error("degenerate fit: {0}")]
    Degenerate(String),

    #[error("property violated: {0}")]
    PropertyViolated(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
