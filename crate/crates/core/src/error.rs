use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),

    #[error("state at step {step} was not recorded; add denser checkpoints around it")]
    MissingCheckpoint { step: usize },

    #[error("trajectory (seed {seed}, index {trajectory_index}) produced a non-finite state at step {step}")]
    SimulationFailed {
        seed: u64,
        trajectory_index: u64,
        step: usize,
    },

    #[error("flow integration hit a non-finite state at t = {t}")]
    Singularity { t: f64 },

    #[error("no equilibrium found before t = {t_max} (|g| = {residual:e})")]
    NoConvergence { t_max: f64, residual: f64 },

    #[error("only {usable} usable checkpoints in window (need 3); filtered out: {filtered:?}")]
    InsufficientData { usable: usize, filtered: Vec<usize> },

    #[error("kappa(n) still increasing near n_max = {n_max}; the supremum is not bracketed, raise n_max")]
    NotBracketed { n_max: usize },

    #[error("matrix is not of the form a*I + b*J")]
    NotRotationScaling,
}

pub type Result<T> = std::result::Result<T, Error>;
