use thiserror::Error;

use crate::vla::Buffer;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid machine configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid cache geometry: {0}")]
    InvalidGeometry(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("out-of-bounds access on {buffer}: elements {offset}..{end} exceed length {len}")]
    OutOfBounds {
        buffer: Buffer,
        offset: usize,
        end: usize,
        len: usize,
    },

    #[error("vector length mismatch: {expected} lanes vs {found} lanes")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid convolution spec: {0}")]
    InvalidSpec(String),

    #[error("unsupported algorithm: {0}")]
    UnsupportedAlgorithm(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("trace references unregistered buffer {0}")]
    UnregisteredBuffer(String),
}
