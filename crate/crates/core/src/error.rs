use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the quantification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mask contains no foreground pixels")]
    EmptyMask,

    #[error("stain matrix is singular (|det| = {det:e})")]
    SingularMatrix { det: f64 },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("clustering undefined for k = 1")]
    UndefinedForKOne,

    #[error("cannot form {k} clusters from {n} points")]
    TooFewPoints { k: usize, n: usize },

    #[error("DAB mask has {outside} pixel(s) outside the tissue mask")]
    SubsetViolation { outside: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        actual: (u32, u32),
    },

    #[error("invalid dimensions {width}x{height} for {len} pixels")]
    InvalidDimensions { width: u32, height: u32, len: usize },

    #[error("failed to decode {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("image encoding failed: {0}")]
    Encode(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
