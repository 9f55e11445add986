use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mask has no set pixels")]
    EmptyMask,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("vector has (near-)zero norm")]
    ZeroVector,
    #[error("rectangle {x},{y} {w}x{h} lies outside a {width}x{height} image")]
    OutOfBounds {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        width: usize,
        height: usize,
    },
    #[error("non-finite activation in {0}")]
    NonFiniteActivation(&'static str),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("duplicate material id `{0}`")]
    DuplicateId(String),
    #[error("vector is not unit norm (norm = {norm})")]
    NonUnitNorm { norm: f64 },
    #[error("need {needed} parts with distinct materials, split provides {available}")]
    InsufficientDistinctMaterials { needed: usize, available: usize },
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },
    #[error("manifest lists no objects")]
    EmptyManifest,
    #[error("unknown material `{0}`")]
    UnknownMaterial(String),
    #[error("bad magic in {what}")]
    BadMagic { what: &'static str },
    #[error("unsupported {what} version {found} (expected {expected})")]
    VersionMismatch {
        what: &'static str,
        expected: u32,
        found: u32,
    },
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("malformed image: {0}")]
    Image(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

impl From<io::Error> for Error {
    fn from(source: io::Error) -> Self {
        Error::Io {
            context: "io".into(),
            source,
        }
    }
}
