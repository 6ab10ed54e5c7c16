//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by model construction, fitting, and control.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid degree range: min_order {min_order} must satisfy 1 <= min_order <= max_order {max_order}")]
    InvalidDegreeRange { min_order: u32, max_order: u32 },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("mass matrix is singular or not positive definite")]
    SingularMassMatrix,

    #[error("linearization is unstable: eigenvalue with real part {max_real:.6e}")]
    UnstableLinearization { max_real: f64 },

    #[error("spectral gap violation: transverse/slow decay ratio {ratio:.3} is below the required {required:.3}")]
    SpectralGapViolation { ratio: f64, required: f64 },

    #[error("non-finite state encountered at t = {time:.6e} s (integration blow-up or dt too large)")]
    NonFiniteState { time: f64 },

    #[error("operation consumed the whole trajectory, leaving no samples")]
    EmptyResult,

    #[error("trajectory too short: need at least {needed} samples, got {got}")]
    TooShortTrajectory { needed: usize, got: usize },

    #[error("inconsistent dimensions across trajectories: {0}")]
    InconsistentDims(String),

    #[error("inconsistent sampling periods across trajectories: {0:.6e} vs {1:.6e}")]
    InconsistentSampling(f64, f64),

    #[error("rank-deficient data: singular value ratio {ratio:.3e} below 1e-12")]
    RankDeficientData { ratio: f64 },

    #[error("ill-conditioned regression: feature Gram condition number {cond:.3e} exceeds {limit:.1e} with no ridge")]
    IllConditionedRegression { cond: f64, limit: f64 },

    #[error("rank-deficient excitation: control Gram condition number {cond:.3e} exceeds {limit:.1e}")]
    RankDeficientExcitation { cond: f64, limit: f64 },

    #[error("hard control constraints are infeasible (empty control polytope)")]
    InfeasibleHardConstraints,

    #[error("QP reported infeasible")]
    QpInfeasible,

    #[error("SCP made no progress: trust radius underflowed to {radius:.3e} without an accepted step")]
    ScpNoProgress { radius: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed data file {path}: {reason}")]
    MalformedFile { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
