//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors surfaced by constructors and operations.
///
/// `HypothesisUnmet` and `NoCounterexample` are *verdict-grade* errors: they
/// signal that a run refused to proceed because a standing hypothesis failed,
/// not that the library malfunctioned. Callers map them to dedicated exit
/// codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("group element has dimension {found}, system acts with dimension {expected}")]
    GroupDimensionMismatch { expected: usize, found: usize },

    #[error("point has dimension {found}, system state space has dimension {expected}")]
    PointDimensionMismatch { expected: usize, found: usize },

    #[error("points belong to different state-space representations")]
    PointVariantMismatch,

    #[error("index {index} outside the supported range of the system ({reason})")]
    UnsupportedIndex { index: i64, reason: &'static str },

    #[error("coordinate {value} exceeds the exact integer range (|coord| <= 2^40)")]
    CoordinateOverflow { value: f64 },

    #[error("symbol {symbol} outside alphabet of size {alphabet}")]
    SymbolOutOfRange { symbol: u8, alphabet: u8 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("weights must be positive and sum to 1 within 1e-12 (sum = {sum})")]
    BadWeights { sum: f64 },

    #[error("region has zero measure{}", at_step(.k))]
    ZeroMeasureRegion { k: Option<usize> },

    #[error("observable must be real and nonnegative for this operation (min = {min:.3e}, max |Im| = {imag:.3e})")]
    NegativeObservable { min: f64, imag: f64 },

    #[error("observable is not real-valued (max |Im| = {imag:.3e})")]
    ComplexObservable { imag: f64 },

    #[error("no Hölder data declared for the observable")]
    MissingHolderData,

    #[error("operation unsupported for this system: {0}")]
    Unsupported(&'static str),

    #[error("periodic-orbit enumeration is unavailable for this system")]
    UnsupportedOracle,

    #[error("hypothesis unmet: {0}")]
    HypothesisUnmet(String),

    #[error("no counterexample: {0}")]
    NoCounterexample(String),

    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed fixture: {0}")]
    MalformedFixture(String),
}

fn at_step(k: &Option<usize>) -> String {
    match k {
        Some(k) => format!(" at step k = {k}"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;
