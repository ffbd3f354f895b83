use thiserror::Error;

/// Errors surfaced by the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes do not line up for the requested operation.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Input data violates a precondition.
    #[error("invalid input: {0}")]
    Input(String),

    /// Training could not proceed or diverged.
    #[error("training failed: {0}")]
    Training(String),

    /// An evaluation precondition (e.g. both classes present) does not hold.
    #[error("evaluation failed: {0}")]
    Evaluation(String),

    /// The requested explanation is not defined for this model.
    #[error("explanation failed: {0}")]
    Explanation(String),

    /// A record could not be parsed.
    #[error("malformed record: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
