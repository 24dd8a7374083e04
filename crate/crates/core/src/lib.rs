//! Ballot-polling audit statistics, exact risk and sample-size evaluation,
//! threshold calibration, Monte Carlo simulation and audit sessions.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod bench;
pub mod calibrate;
pub mod engine;
pub mod error;
pub mod exact;
pub mod method;
pub mod montecarlo;
pub mod prior;
pub mod sample;
pub mod special;
pub mod stats;

pub use error::{AuditError, Result};
pub use method::{MethodKind, MethodSpec, NominalScale, ScoreScale};
pub use prior::{PriorSpec, WeightFn};
pub use sample::{
    BallotSample, SampleCounts, SamplingMode, SamplingScheme, StatisticForm, TrueTally,
};
