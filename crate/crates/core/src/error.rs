use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A size argument does not fit the covariate (patch does not divide, mask larger than image, ...).
    #[error("sizing error: {0}")]
    Sizing(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A corruption or featurizer was applied to the wrong kind of covariate.
    #[error("dispatch error: {0}")]
    Dispatch(String),

    /// A conditional probability needed as an importance-weight denominator is (numerically) zero.
    #[error("undefined importance weight: {0}")]
    UndefinedWeight(String),

    #[error("conditioning event has zero mass: {0}")]
    ZeroMass(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
