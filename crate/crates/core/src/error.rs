use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid dimensions must be at least 1x1 and match the value count (got {height}x{width}, {len} values)")]
    BadDimensions {
        height: usize,
        width: usize,
        len: usize,
    },
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("non-finite value at valid pixel ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("non-positive depth {value} at ({row}, {col})")]
    NonPositive { row: usize, col: usize, value: f64 },
    #[error("sample ({row}, {col}) is outside a {height}x{width} grid")]
    OutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },
    #[error("duplicate sample at ({row}, {col})")]
    DuplicateSample { row: usize, col: usize },
    #[error("degenerate grid: {0}")]
    DegenerateGrid(&'static str),
    #[error("insufficient samples: need {need}, got {got}")]
    InsufficientSamples { need: usize, got: usize },
    #[error("degenerate design matrix (condition {condition:e})")]
    DegenerateDesign { condition: f64 },
    #[error("median of relative depth is zero")]
    ZeroMedian,
    #[error("no pixels where prediction and ground truth are both valid and in range")]
    NoOverlap,
    #[error("sample set is empty")]
    NoSamples,
    #[error("requested {requested} samples but only {available} valid pixels exist")]
    TooManyRequested { requested: usize, available: usize },
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("region {region}: every method in the fallback chain failed ({last})")]
    FallbackExhausted { region: usize, last: Box<Error> },
    #[error("unknown file format")]
    UnknownFormat,
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("grid dimensions {height}x{width} overflow")]
    DimensionOverflow { height: u64, width: u64 },
    #[error("line {line}: {reason}")]
    BadRecord { line: u64, reason: String },
    #[error("{}: {source}", path.display())]
    AtPath { path: PathBuf, source: Box<Error> },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by numerically unusable data rather than bad input.
    pub fn is_numerical(&self) -> bool {
        if let Error::AtPath { source, .. } = self {
            return source.is_numerical();
        }
        matches!(
            self,
            Error::DegenerateGrid(_)
                | Error::InsufficientSamples { .. }
                | Error::DegenerateDesign { .. }
                | Error::ZeroMedian
                | Error::FallbackExhausted { .. }
        )
    }
}

/// Attaches a file path to errors.
pub trait PathContext<T> {
    fn at_path(self, path: &Path) -> Result<T>;
}

impl<T> PathContext<T> for Result<T> {
    fn at_path(self, path: &Path) -> Result<T> {
        self.map_err(|e| Error::AtPath { path: path.to_path_buf(), source: Box::new(e) })
    }
}
