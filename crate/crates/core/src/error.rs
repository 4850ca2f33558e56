use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("sentence {sentence}: {message}")]
    Tree { sentence: usize, message: String },

    #[error("template line {line}: {message}")]
    Template { line: usize, message: String },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("label id {label} out of range for label set of size {size}")]
    LabelOutOfRange { label: usize, size: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model file: {0}")]
    Model(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
