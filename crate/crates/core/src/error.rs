use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point outside the domain of the field: {0}")]
    Domain(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("projection to boundary did not converge after {iterations} iterations (|phi| = {residual:e})")]
    Projection { iterations: usize, residual: f64 },
    #[error("flow step failed: {0}")]
    StepFailure(String),
    #[error("unknown catalog entry: {0}")]
    UnknownCatalog(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("empty sample list")]
    Empty,
    #[error("singular linear system: {0}")]
    Singular(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
