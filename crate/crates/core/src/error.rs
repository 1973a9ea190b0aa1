use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("token id {id} out of range for vocabulary of {size} tokens")]
    IdOutOfRange { id: u32, size: usize },

    #[error("vocabulary version mismatch: expected {expected:016x}, found {found:016x}")]
    VersionMismatch { expected: u64, found: u64 },

    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),

    #[error("logit vector has length {found}, vocabulary has {expected} tokens")]
    LengthMismatch { expected: usize, found: usize },

    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("non-finite logit at index {0}")]
    NonFinite(usize),

    #[error("probability vector sums to {0}, expected 1")]
    NotNormalized(f64),

    #[error("undecidable: {0}")]
    Undecidable(&'static str),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("invalid key material: {0}")]
    InvalidKey(String),

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn out_of_range(name: &'static str, value: f64, range: &'static str) -> Self {
        Error::OutOfRange { name, value, range }
    }
}
