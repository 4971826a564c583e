use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the light field containers, the sensing model and the
/// tensor file formats.
#[derive(Debug, Error)]
pub enum LfError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("patch {origin:?}+{size:?} does not fit inside a {canvas:?} image")]
    Bounds {
        origin: (usize, usize),
        size: (usize, usize),
        canvas: (usize, usize),
    },

    #[error("pixel ({row}, {col}) is not covered by any patch")]
    Coverage { row: usize, col: usize },

    #[error("expected {expected} values, got {actual}")]
    Length { expected: usize, actual: usize },

    #[error("invalid value {value} at flat index {index}: {reason}")]
    Value {
        index: usize,
        value: f32,
        reason: &'static str,
    },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("missing view ({u}, {v}) at {}", path.display())]
    MissingView { u: usize, v: usize, path: PathBuf },

    #[error("malformed tensor file: {0}")]
    Format(String),

    #[error("malformed metadata: {0}")]
    Meta(String),

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LfError>;
