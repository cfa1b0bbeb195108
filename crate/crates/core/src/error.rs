//! Error type shared by all modules.

use thiserror::Error;

/// Errors raised by curve construction, flows and spectral computations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Fewer samples than the stencils need.
    #[error("degenerate resolution: n = {n}, need at least {min}")]
    DegenerateResolution { n: usize, min: usize },

    /// Input outside the domain of an operation.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Arclength resampling did not reach the tolerance.
    #[error("resampling failed after {iterations} iterations (relative residual {residual:e})")]
    Resampling { iterations: usize, residual: f64 },

    /// An axis is required for the flux functionals E_{-1}, E_{-2}.
    #[error("axis required for k = {k}")]
    MissingAxis { k: i32 },

    /// Index outside the implemented range.
    #[error("index {k} outside the implemented range {min}..={max}")]
    OutOfRange { k: i32, min: i32, max: i32 },

    /// The axis is not fixed by the monodromy rotation.
    #[error("axis is not an eigenvector of the monodromy rotation (|Av - v| = {defect:e})")]
    MonodromyMismatch { defect: f64 },

    /// A flow produced NaN or exceeded the blow-up bound.
    #[error("blow-up at step {step}: {reason}")]
    BlowUp { step: usize, reason: String },

    /// Time step rejected by the stability guard.
    #[error("time step {dt:e} exceeds the stability bound {bound:e}")]
    Unstable { dt: f64, bound: f64 },

    /// Least-squares system too ill-conditioned to trust.
    #[error("ill-conditioned fit (condition number {condition:e})")]
    IllConditioned { condition: f64 },

    /// 1 + (Y, T) vanishes in the sector-area integrand.
    #[error("singular spherical sector at sample {index} (1 + (Y,T) = {value:e})")]
    SingularSector { index: usize, value: f64 },

    /// Monodromy is parabolic: the two eigenlines coincide.
    #[error("branch point: eigenline gap {gap:e}")]
    BranchPoint { gap: f64 },

    /// Operation needs a non-real (or real) spectral parameter.
    #[error("spectral parameter outside domain: {0}")]
    Domain(String),

    /// Serialization or file I/O failure.
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
