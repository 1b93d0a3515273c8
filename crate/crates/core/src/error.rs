use std::io;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TensorError {
    #[error("tensors must have at least one element")]
    Empty,
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("shape {rows}x{cols} does not match data length {len}")]
    Shape { rows: usize, cols: usize, len: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Mismatch { expected: usize, found: usize },
}

/// Failures reading or writing GTPK bundles.
#[derive(Debug, Error)]
pub enum BundleError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic bytes {found:?}, expected \"GTPK\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("file truncated while reading {context}")]
    Truncated { context: String },
    #[error("chunk {name:?}: {reason}")]
    BadChunk { name: String, reason: String },
    #[error("required chunk {0:?} missing")]
    MissingChunk(&'static str),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in chunk {name:?} at flat index {index}")]
    NonFinite { name: String, index: usize },
    #[error("bundle failed validation: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<crate::bundle::Violation>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrustError {
    #[error("k = {k} is outside 1 <= k <= N-1 for N = {n_classes}")]
    InvalidK { k: usize, n_classes: usize },
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("degenerate score: every gradient variance is zero")]
    DegenerateScore,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("percentile level {level} outside 1..={bins}")]
    LevelOutOfRange { level: usize, bins: usize },
    #[error("bin count must be at least 1")]
    NoBins,
    #[error("score table is empty")]
    EmptyTable,
    #[error("metric column {0:?} not present")]
    MissingMetric(String),
    #[error("duplicate sample id {0}")]
    DuplicateSample(u64),
    #[error("line {line}: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid blob spec: {0}")]
    InvalidSpec(String),
    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    TrainingDiverged { epoch: usize, loss: f64 },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
