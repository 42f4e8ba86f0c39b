//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("flow time {tau} outside [{lo}, {hi}]")]
    TimeOutOfRange { tau: f64, lo: f64, hi: f64 },

    #[error("metric degenerate at tau = {tau}: {detail}")]
    DegenerateMetric { tau: f64, detail: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("tangent vectors based at different points")]
    BaseMismatch,

    #[error("input vectors rank deficient (condition estimate {cond:.3e})")]
    RankDeficient { cond: f64 },

    #[error("exponential-map step too large: |v| = {norm:.3e}, guard = {guard:.3e}")]
    StepTooLarge { norm: f64, guard: f64 },

    #[error("L-geodesic integration blew up at s = {s:.6}")]
    Blowup { s: f64 },

    #[error("boundary-value solver failed: {0}")]
    SolverFailed(String),

    #[error("walk aborted at step {step}: {reason}")]
    WalkAborted { step: usize, reason: String },

    #[error("non-finite cost matrix entry at ({row}, {col})")]
    NonFiniteCost { row: usize, col: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
