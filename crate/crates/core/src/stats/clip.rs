//! The ClipAudit statistic.

use crate::error::{domain, Result};
use crate::sample::{BallotSample, SampleCounts};

/// `(A_n - B_n) / sqrt(A_n + B_n) = (2Y - n) / sqrt(n)`.
pub fn clip_value(counts: SampleCounts) -> Result<f64> {
    if counts.n == 0 {
        return domain("ClipAudit statistic is undefined for an empty sample");
    }
    let n = counts.n as f64;
    Ok((2.0 * counts.winners as f64 - n) / n.sqrt())
}

pub fn clip_statistic(sample: &BallotSample) -> Result<f64> {
    clip_value(sample.counts())
}

/// Smallest winner count certifying at sample size `n` with threshold `c`:
/// `floor((n + c sqrt(n)) / 2) + 1`.
pub fn clip_boundary(n: u64, c: f64) -> u64 {
    (((n as f64 + c * (n as f64).sqrt()) / 2.0).floor() as i64 + 1).max(0) as u64
}
