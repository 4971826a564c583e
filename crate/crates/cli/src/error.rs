use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("dataset {}: {message}", path.display())]
    Dataset { path: PathBuf, message: String },

    #[error("stage '{stage}' failed (config {fingerprint}): {message}")]
    Stage {
        stage: &'static str,
        fingerprint: String,
        message: String,
    },

    #[error(transparent)]
    Core(#[from] lfcs_core::LfError),

    #[error(transparent)]
    Sparse(#[from] lfcs_sparse::SparseError),

    #[error(transparent)]
    Nets(#[from] lfcs_nets::NetsError),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;
