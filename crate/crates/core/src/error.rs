use std::io;

use swindqn_tensor::TensorError;
use thiserror::Error;

use crate::checkpoint::CheckpointError;
use crate::env::TransportError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("environment error: {0}")]
    Env(String),

    #[error("transport error: {0}")]
    Transport(#[from] TransportError),

    #[error("checkpoint error: {0}")]
    Checkpoint(#[from] CheckpointError),

    #[error("anchor lookup failed: no entry for task `{0}`")]
    MissingAnchor(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
