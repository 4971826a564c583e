use std::path::PathBuf;

use lfcs_core::LfError;
use lfcs_nn::NnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetsError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0} source is empty")]
    EmptySource(&'static str),
    #[error("training diverged at step {step} (loss {loss}); parameters restored to {}", restored_from.as_ref().map_or("the last good in-memory state".to_string(), |p| p.display().to_string()))]
    Diverged {
        step: usize,
        loss: f64,
        restored_from: Option<PathBuf>,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Core(#[from] LfError),
}

pub type Result<T> = std::result::Result<T, NetsError>;
