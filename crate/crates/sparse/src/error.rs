use thiserror::Error;

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("column {0} of the system matrix is zero")]
    ZeroColumn(usize),

    #[error("least-squares refit is ill-conditioned on support {support:?}")]
    IllConditioned { support: Vec<usize> },

    #[error("invalid parameter: {0}")]
    Invalid(String),

    #[error(transparent)]
    Core(#[from] lfcs_core::LfError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed dictionary sidecar: {0}")]
    Sidecar(String),
}

pub type Result<T> = std::result::Result<T, SparseError>;
