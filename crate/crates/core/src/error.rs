use thiserror::Error;

/// Errors raised anywhere in the simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate factor label `{0}`")]
    DuplicateLabel(String),
    #[error("unknown factor label `{0}`")]
    UnknownLabel(String),
    #[error("invalid factor `{label}`: {reason}")]
    InvalidFactor { label: String, reason: String },
    #[error("factor `{label}` is not a {expected} factor")]
    WrongFactorKind { label: String, expected: &'static str },
    #[error("weighted collective operator requested on collective-spin factor `{0}`")]
    WeightedCollectiveSpin(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("trace drift {drift:e} at t = {t} exceeds tolerance")]
    TraceDrift { t: f64, drift: f64 },
    #[error("coherence matrix has a negative eigenvalue {value:e} (largest {largest:e})")]
    NegativeOccupancy { value: f64, largest: f64 },
    #[error("dominant mode occupancy {0:e} is below threshold: nothing was emitted into the channel")]
    DarkStart(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unnormalizable state: {0}")]
    Unnormalizable(String),
    #[error("truncation leakage {leakage:e} exceeds {limit:e}; raise the cutoff")]
    TruncationLeakage { leakage: f64, limit: f64 },
    #[error("phase-space grid too narrow: boundary value {boundary:e} vs maximum {max:e}")]
    GridTooNarrow { boundary: f64, max: f64 },
    #[error("{variant} variant with {n} emitters exceeds the qubit cap of {cap}")]
    TooManyQubits { variant: &'static str, n: usize, cap: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error("parse error in {path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
