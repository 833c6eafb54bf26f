use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("singular input: eigenvalue {eigenvalue:e} is not positive (largest {largest:e})")]
    Singular { eigenvalue: f64, largest: f64 },
    #[error("grid too small: {0}")]
    GridTooSmall(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid model: {0}")]
    Model(String),
    #[error("unsupported backend: {0}")]
    Unsupported(String),
    #[error("inconsistent input lengths: {0}")]
    Length(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("bracket does not straddle the threshold: {0}")]
    Bracket(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
