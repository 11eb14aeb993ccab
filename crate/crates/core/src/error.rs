use alloc::string::String;

use crate::model::QueueState;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("rate `{name}` must be finite and strictly positive, got {value}")]
    InvalidRate { name: &'static str, value: f64 },

    #[error("parameters (λ={lambda}, μ1={mu1}, μ2={mu2}) have no stationary distribution")]
    Unstable { lambda: f64, mu1: f64, mu2: f64 },

    #[error("load factors coincide (ρ1 = ρ2 = {0}); use a truncated-grid sum instead")]
    DegenerateLoads(f64),

    #[error("transition {from} -> {to} is possible under P but impossible under Q")]
    SupportMismatch { from: QueueState, to: QueueState },

    #[error("transition {from} -> {to} is impossible under both kernels")]
    IllegalTransition { from: QueueState, to: QueueState },

    #[error("regenerative cycle exceeded the cap of {cap} steps")]
    CycleCapExceeded { cap: u64 },

    #[error("`{0}` must be at least 1")]
    ZeroCount(&'static str),

    #[error("sum of importance weights is {0}; the estimate is undefined")]
    DegenerateWeights(f64),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("median heuristic needs at least 2 points, got {0}")]
    BatchTooSmall(usize),

    #[error("kernel bandwidth must be finite and positive, got {0}")]
    InvalidBandwidth(f64),

    #[error("unknown kernel name {0:?} (expected one of ln, gs, lp, im)")]
    UnknownKernel(String),

    #[error("invalid training configuration: {0}")]
    InvalidConfig(&'static str),

    #[error("training loss became non-finite at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("split fraction must lie strictly between 0 and 1, got {0}")]
    InvalidSplit(f64),
}
