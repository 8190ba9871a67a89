//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Errors produced by system evaluation, integration and reduction.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("mass matrix is not symmetric (relative deviation {deviation:.3e})")]
    AsymmetricMass { deviation: f64 },

    #[error("mass matrix is numerically singular (condition estimate {cond:.3e})")]
    SingularMetric { cond: f64 },

    #[error("guard '{0}' has a degenerate surface normal")]
    DegenerateGuard(String),

    #[error("polar chart singular at r = {r:.3e}")]
    ChartSingularity { r: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("coordinates {0:?} are not cyclic: {1}")]
    NotCyclic(Vec<usize>, String),

    #[error("reduction regularity failure: {0}")]
    Regularity(String),

    #[error("unknown guard label '{0}'")]
    UnknownGuard(String),

    #[error("initial state lies on guard '{0}' with admissible approach")]
    GuardViolationAtStart(String),

    #[error("step size underflow at t = {t:.6e}")]
    StepSizeUnderflow { t: f64 },

    #[error("step limit exceeded during integration")]
    MaxStepsExceeded,

    #[error("event localization failed on guard '{guard}': |h| = {residual:.3e}")]
    EventLocalizationFailed { guard: String, residual: f64 },

    #[error("impact map moved the configuration (|dq| = {0:.3e}); impacts must preserve q")]
    ImpactMovedConfiguration(f64),

    #[error("record has no events")]
    EmptyRecord,

    #[error("record is missing the momentum sequence")]
    MissingMomentumSequence,

    #[error("invalid numerics configuration: {0}")]
    InvalidConfig(String),

    #[error("classification probe failed on guard '{0}': {1}")]
    ProbeFailed(String, String),
}

pub type Result<T> = std::result::Result<T, Error>;
