//! Neural-network substrate: dense matrices, a reverse-mode tape, named
//! parameters with Adam, reusable blocks, and checkpoint serialization.

pub mod blocks;
pub mod checkpoint;
pub mod matrix;
pub mod optim;
pub mod tape;

pub use matrix::Matrix;
pub use optim::ParameterStore;
pub use tape::{NodeId, Tape};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("unknown parameter: {0}")]
    UnknownParam(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
