use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("matrix is not positive definite (condition estimate {condition:.3e})")]
    NotPositiveDefinite { condition: f64 },
    #[error("training diverged at batch {batch}: {detail}")]
    Diverged { batch: usize, detail: String },
}

pub type Result<T> = std::result::Result<T, NetError>;
