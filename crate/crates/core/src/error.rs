use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Coarse classification, used for machine-readable reason codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Shapes, grids or sizes do not fit together.
    Structural,
    /// Inputs violate a documented precondition.
    Validation,
    /// An algorithm failed to deliver its accuracy contract.
    Numerical,
    /// The simulation left the regime where the discretization is trustworthy.
    Validity,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    GridMismatch,
    SizeMismatch { expected: usize, found: usize },
    MemoryCap { requested: u128, cap: usize },
    InvalidConfig(String),
    NotNormalized { deviation: f64 },
    NonFinite,
    NoConvergence { estimate: f64, residual: f64, iterations: usize },
    NormDrift { drift: f64, t: f64 },
    TracerEscaped { tracer: usize, t: f64 },
    OutsideTrajectory { t: f64, start: f64, end: f64 },
    TimeMismatch { expected: f64, found: f64 },
    NonUniformStride,
    TooFewSamples { needed: usize, found: usize },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::GridMismatch
            | Error::SizeMismatch { .. }
            | Error::MemoryCap { .. }
            | Error::OutsideTrajectory { .. }
            | Error::TimeMismatch { .. }
            | Error::NonUniformStride
            | Error::TooFewSamples { .. } => ErrorKind::Structural,
            Error::InvalidConfig(_) | Error::NotNormalized { .. } | Error::NonFinite => {
                ErrorKind::Validation
            }
            Error::NoConvergence { .. } | Error::NormDrift { .. } => ErrorKind::Numerical,
            Error::TracerEscaped { .. } => ErrorKind::Validity,
        }
    }

    /// Stable snake_case identifier written to run summaries.
    pub fn code(&self) -> &'static str {
        match self {
            Error::GridMismatch => "grid_mismatch",
            Error::SizeMismatch { .. } => "size_mismatch",
            Error::MemoryCap { .. } => "memory_cap",
            Error::InvalidConfig(_) => "invalid_config",
            Error::NotNormalized { .. } => "not_normalized",
            Error::NonFinite => "non_finite",
            Error::NoConvergence { .. } => "no_convergence",
            Error::NormDrift { .. } => "norm_drift",
            Error::TracerEscaped { .. } => "tracer_escaped",
            Error::OutsideTrajectory { .. } => "outside_trajectory",
            Error::TimeMismatch { .. } => "time_mismatch",
            Error::NonUniformStride => "non_uniform_stride",
            Error::TooFewSamples { .. } => "too_few_samples",
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::GridMismatch => write!(f, "operands live on different grids"),
            Error::SizeMismatch { expected, found } => {
                write!(f, "expected {expected} samples, found {found}")
            }
            Error::MemoryCap { requested, cap } => write!(
                f,
                "tensor grid needs {requested} complex samples but the cap is {cap}; \
                 reduce n or N, or raise SIM_MEMORY_CAP_SAMPLES"
            ),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::NotNormalized { deviation } => {
                write!(f, "one-particle state is not normalized (|norm - 1| = {deviation:e})")
            }
            Error::NonFinite => write!(f, "non-finite sample encountered"),
            Error::NoConvergence { estimate, residual, iterations } => write!(
                f,
                "power iteration did not converge after {iterations} iterations \
                 (estimate {estimate:e}, relative change {residual:e})"
            ),
            Error::NormDrift { drift, t } => write!(
                f,
                "norm drift {drift:e} in one step at t = {t}; use a smaller time step"
            ),
            Error::TracerEscaped { tracer, t } => write!(
                f,
                "tracer {tracer} left the safe interior of the box at t = {t}"
            ),
            Error::OutsideTrajectory { t, start, end } => {
                write!(f, "time {t} outside driver trajectory cover [{start}, {end}]")
            }
            Error::TimeMismatch { expected, found } => {
                write!(f, "states are not synchronized: t = {expected} vs t = {found}")
            }
            Error::NonUniformStride => write!(f, "sample times are not uniformly spaced"),
            Error::TooFewSamples { needed, found } => {
                write!(f, "need at least {needed} samples, got {found}")
            }
        }
    }
}

impl core::error::Error for Error {}
