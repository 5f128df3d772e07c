use thiserror::Error;

/// Top-level error for training runs, experiment protocols, and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(#[from] crate::data::DataError),
    #[error("model: {0}")]
    Model(#[from] crate::model::ModelError),
    #[error("tensor: {0}")]
    Tensor(#[from] crate::tensor::TensorError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
