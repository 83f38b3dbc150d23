use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    /// Bad metric, domain or solver parameters.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    /// The gradient of the level-set function vanishes where a normal is required.
    #[error("degenerate boundary at {point:?}: |grad phi|_g = {grad_norm:e}")]
    DegenerateBoundary { point: Vec<f64>, grad_norm: f64 },

    /// Mismatched discretizations, dimensions or malformed inputs.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Two computed constants disagree with an inequality they must satisfy.
    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
