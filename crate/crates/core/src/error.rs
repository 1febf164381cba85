//! Error taxonomy shared across the crate.
//!
//! The variants map onto failure classes with distinct handling: dimension
//! and contract errors indicate a caller bug, configuration and data errors
//! indicate bad user input, format errors carry the weight/pack file error
//! codes, and numeric errors flag non-finite values escaping a computation.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes do not line up; the message names the offending axis.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A parameter or config value is outside its legal range.
    #[error("configuration error: {0}")]
    Config(String),

    /// An API precondition was violated by the caller.
    #[error("contract error: {0}")]
    Contract(String),

    /// The input data cannot satisfy the request (missing videos, short clips, ...).
    #[error("data error: {0}")]
    Data(String),

    /// Binary file format violation (weights, packed samples).
    #[error("format error: {0}")]
    Format(#[from] FormatError),

    /// Non-finite values were produced where finite ones are guaranteed.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A multi-stage run failed; the tag names the stage, partial results stand.
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Distinct error codes for the binary file formats.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported version {found} (supported: {supported})")]
    Version { found: u32, supported: u32 },

    #[error("stream truncated while reading {context}")]
    Truncated { context: String },

    #[error("shape mismatch for '{name}': file has {found:?}, model expects {expected:?}")]
    ShapeMismatch {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },

    #[error("entry '{name}' not present in the model")]
    UnknownEntry { name: String },

    #[error("model tensor '{name}' missing from the stream")]
    MissingEntry { name: String },
}

impl Error {
    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Wrap an error with the experiment stage it occurred in.
    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
