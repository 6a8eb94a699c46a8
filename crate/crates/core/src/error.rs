use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid spec: {0}")]
    InvalidGrid(String),
    #[error("point ({lat}, {lon}) lies outside the grid bounding box")]
    OutOfBounds { lat: f64, lon: f64 },
    #[error("no input survived filtering")]
    EmptyInput,
    #[error("normalization scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("negative concentration {0}")]
    NegativeValue(f64),
    #[error("every station reading is missing")]
    AllMissing,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("max-pool needs even spatial dimensions, got {height}x{width}")]
    OddDimension { height: usize, width: usize },
    #[error("target is not a one-hot vector")]
    NotOneHot,
    #[error("backward called without a cached forward pass")]
    NoForwardCache,
    #[error("dataset too small: {0}")]
    EmptyDataset(String),
    #[error("input values must lie in [0, 1], found {0}")]
    UnnormalizedInput(f64),
    #[error("series of length {len} is too short for window length {window}")]
    SeriesTooShort { len: usize, window: usize },
    #[error("alpha must lie in [0, 1], got {0}")]
    AlphaOutOfRange(f64),
    #[error("every target is zero, relative error undefined")]
    AllTargetsZero,
    #[error("length mismatch: {0} truth values vs {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("missing or malformed header in {}", .0.display())]
    MissingHeader(PathBuf),
    #[error("unsupported checkpoint version {found} (reader supports {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("checkpoint checksum does not match its contents")]
    ChecksumFailure,
    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
