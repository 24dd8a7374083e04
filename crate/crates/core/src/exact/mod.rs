//! Exact risk, power and sample-size evaluation.

pub mod boundary;
pub mod dp;

pub use boundary::{
    boundary_with_cache, check_monotone, compute_boundary, BoundaryPoint, DecisionBoundary,
    ScoreCache,
};
pub use dp::{
    conditional_eval, forward_dp, forward_dp_with_boundary, max_risk, worst_case_tally, EvalResult,
    Projection,
};
