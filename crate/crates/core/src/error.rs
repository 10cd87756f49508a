use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("graph has {nodes} nodes but capacity is {capacity}")]
    Capacity { nodes: usize, capacity: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{what} of size {size} exceeds the limit of {limit}")]
    Size {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged at step {step} (loss = {loss})")]
    Divergence { step: usize, loss: f64 },

    #[error("generation failed: {0}")]
    Generation(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
