use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed row: {reason}")]
    MalformedRow {
        path: PathBuf,
        line: u64,
        reason: String,
    },

    #[error("station {station}: non-monotone timestamps at row {line}")]
    NonMonotoneTimestamps { station: String, line: u64 },

    #[error("station {station}: reading interval is {got} s, expected {expected} s")]
    BadInterval {
        station: String,
        got: i64,
        expected: i64,
    },

    #[error("incident {incident}: {reason}")]
    InvalidIncident { incident: String, reason: String },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("zero-norm vector passed to cosine difference")]
    ZeroNorm,

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("series length {len} is not a whole number of {slots_per_day}-slot days")]
    PartialDay { len: usize, slots_per_day: usize },

    #[error("profile slot {slot} has no non-missing observations")]
    EmptyProfileSlot { slot: usize },

    #[error("series shorter ({len}) than window ({window})")]
    SeriesTooShort { len: usize, window: usize },

    #[error("station {station} is not snapped to the road graph")]
    UnsnappedStation { station: String },

    #[error("zero-length polyline {0}")]
    ZeroLengthPolyline(usize),

    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),

    #[error("singular design matrix")]
    SingularDesign,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("cross-validation: {0}")]
    CrossValidation(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
