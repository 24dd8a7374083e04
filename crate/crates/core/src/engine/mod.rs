//! Stopping rules, decisions, threshold correspondences and audit sessions.

pub mod decision;
pub mod rule;
pub mod session;
pub mod thresholds;

pub use decision::{decide, Decision, DecisionNote, EscalationReason, Verdict};
pub use rule::{Schedule, StoppingRule};
pub use session::{
    proven_min_winners, AuditSession, ContestConfig, ExtendedReal, RoundOutcome, RoundRecord,
    SessionStatus,
};
pub use thresholds::{bayes_thresholds, bayes_to_sprt, sprt_to_bayes};
