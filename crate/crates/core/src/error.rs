use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit can report. Variants carry enough location
/// information (byte offset, line number, row index) to find the bad input.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("i/o error: {0}")]
    Stream(#[from] io::Error),

    #[error("bad magic at byte 0: expected \"EMB1\", found {found:?}")]
    BadMagic { found: [u8; 4] },

    #[error("truncated input at byte {offset}: expected {expected} bytes, found {found}")]
    Truncated {
        offset: u64,
        expected: u64,
        found: u64,
    },

    #[error("trailing data at byte {offset}")]
    TrailingBytes { offset: u64 },

    #[error("non-finite value {value} at byte {offset}")]
    NonFinite { offset: u64, value: f32 },

    #[error("invalid matrix shape: rows={rows}, dim={dim}, data length={len}")]
    Shape { rows: usize, dim: usize, len: usize },

    #[error("row {row} has norm {norm:e}, below the normalization floor")]
    ZeroRow { row: usize, norm: f64 },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("k = {k} is out of range 1..={max}")]
    KOutOfRange { k: usize, max: usize },

    #[error("concept index {index} is out of range for a vocabulary of {size}")]
    ConceptOutOfRange { index: usize, size: usize },

    #[error("duplicate concept name {name:?} at index {index}")]
    DuplicateConcept { name: String, index: usize },

    #[error("sample {sample} references concept {concept} which has zero frequency")]
    ZeroFrequency { sample: usize, concept: usize },

    #[error("sample {sample} has no assigned concepts")]
    NoConcepts { sample: usize },

    #[error("weights are not normalized: sum = {sum}")]
    NotNormalized { sum: f64 },

    #[error("invalid weight {value} at index {index}")]
    InvalidWeight { index: usize, value: f64 },

    #[error("cannot draw {requested} samples without replacement from {available}")]
    SampleBound { requested: usize, available: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate sample id {id:?}")]
    DuplicateId { id: String },

    #[error("partition violation: {0}")]
    Partition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("instance too large for the exact oracle: {items} items (max {max})")]
    InstanceTooLarge { items: usize, max: usize },

    #[error("sample {id:?}: image {width}x{height} is smaller than one {patch}px patch")]
    ImageTooSmall {
        id: String,
        width: u32,
        height: u32,
        patch: u32,
    },

    #[error("sample {id:?} has zero total tokens")]
    ZeroLength { id: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable tag, used by the CLI error object and the C ABI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } | Error::Stream(_) => "io",
            Error::BadMagic { .. }
            | Error::Truncated { .. }
            | Error::TrailingBytes { .. }
            | Error::Parse { .. } => "format",
            Error::NonFinite { .. }
            | Error::Shape { .. }
            | Error::ZeroRow { .. }
            | Error::DimensionMismatch { .. }
            | Error::ImageTooSmall { .. }
            | Error::ZeroLength { .. } => "invalid_data",
            Error::KOutOfRange { .. }
            | Error::SampleBound { .. }
            | Error::Config(_)
            | Error::InstanceTooLarge { .. } => "invalid_argument",
            Error::ConceptOutOfRange { .. }
            | Error::DuplicateConcept { .. }
            | Error::ZeroFrequency { .. }
            | Error::NoConcepts { .. }
            | Error::NotNormalized { .. }
            | Error::InvalidWeight { .. }
            | Error::DuplicateId { .. }
            | Error::Partition(_) => "inconsistent",
            Error::Empty(_) => "empty",
        }
    }
}
