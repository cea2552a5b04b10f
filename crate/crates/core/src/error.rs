use std::io;

use thiserror::Error;

/// Errors raised by the simulation, estimation and reporting layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("length mismatch: expected {expected} samples, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("trajectories crossed at step {step} between points {index} and {}", index + 1)]
    MonotonicityViolation { step: usize, index: usize },

    #[error("non-finite state at step {step}, point {index}")]
    NonFiniteState { step: usize, index: usize },

    #[error("drift does not provide an analytic spatial derivative")]
    MissingDerivative,

    #[error("drift does not provide semimartingale parts f and g")]
    MissingSemimartingale,

    #[error("query point {x} outside flow image [{lo}, {hi}]")]
    QueryOutsideRange { x: f64, lo: f64, hi: f64 },

    #[error("mass drift {drift:e} at t = {time} exceeds tolerance {tolerance:e}")]
    MassDriftExceeded { time: f64, drift: f64, tolerance: f64 },

    #[error("quadrature under-resolved: spacing {dz} exceeds epsilon/8 = {}", eps / 8.0)]
    UnderResolved { dz: f64, eps: f64 },

    #[error("test function support [{lo}, {hi}] leaves the domain [{domain_lo}, {domain_hi}]")]
    SupportViolation {
        lo: f64,
        hi: f64,
        domain_lo: f64,
        domain_hi: f64,
    },

    #[error("unknown drift '{0}'")]
    UnknownDrift(String),

    #[error("unknown initial datum '{0}'")]
    UnknownInitial(String),

    #[error("initial datum is not normalizable (mass {0})")]
    NonNormalizable(f64),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::UnknownDrift(_) | Error::UnknownInitial(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
