use thiserror::Error;

/// Errors produced by the filtering, perturbation, and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("LMS update diverged (non-finite weights); step size too large")]
    Divergence,

    #[error("step-size bound is unbounded: training window has zero power")]
    UnboundedStep,

    #[error("matrix is not symmetric within tolerance")]
    NotSymmetric,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("negative input: {context} must be >= 0")]
    NegativeInput { context: &'static str },

    #[error("eigenvalue spectrum is all zero; normalization undefined")]
    ZeroSpectrum,

    #[error("Jacobi eigensolver did not converge within the sweep limit")]
    NoConvergence,

    #[error("warmup series too short: need at least {need} samples, got {got}")]
    WarmupTooShort { need: usize, got: usize },

    #[error("unknown device id {0}")]
    UnknownDevice(usize),

    #[error("stale update: timestamp {got} not after {last}")]
    StaleTimestamp { got: i64, last: i64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("dataset error at {path}:{line}: {reason}")]
    Dataset {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("simulation aborted at tick {tick}: {source}")]
    Tick {
        tick: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
