use thiserror::Error;

use crate::lp::LpStatus;

/// Errors surfaced by planning, attack synthesis, and detection routines.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The induced chain is not irreducible, so stationary quantities are
    /// ill-defined. Callers are expected to fix the model rather than rely on
    /// a silently averaged answer.
    #[error("induced chain is reducible: {0}")]
    ReducibleChain(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("infeasible attack problem: {0}")]
    Infeasible(String),

    /// The Riccati recursion lost definiteness or diverged for this penalty.
    #[error("penalty beta={beta} infeasible at step {step}: {reason}")]
    InfeasibleBeta {
        beta: f64,
        step: usize,
        reason: String,
    },

    #[error("discount {gamma} out of range: must lie in ({gamma0}, 1)")]
    DiscountOutOfRange { gamma: f64, gamma0: f64 },

    #[error("linear program terminated with status {status:?}: {context}")]
    LpFailed { status: LpStatus, context: String },

    #[error("attacked closed loop unstable: spectral radius {rho}")]
    UnstableLoop { rho: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
