//! The stopping decision at a check point.

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::method::ScoreScale;
use crate::sample::SampleCounts;

use super::rule::StoppingRule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EscalationReason {
    MaxSamples,
    LowerThreshold,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "kebab-case")]
pub enum Decision {
    Continue,
    Certify,
    /// The sample itself shows the reported winner has a majority.
    CertifyProven,
    FullHandCount {
        reason: EscalationReason,
    },
    /// The statistic could not be evaluated; the session is frozen.
    ManualReview,
}

impl Decision {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, Decision::Continue)
    }

    pub fn certifies(&self) -> bool {
        matches!(self, Decision::Certify | Decision::CertifyProven)
    }
}

/// Events worth surfacing alongside a decision.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecisionNote {
    /// The statistic fell below the lower threshold before the minimum
    /// sample size; sampling continued.
    LowerThresholdBeforeMinimum,
    /// The round ended between check points, so the rule was not evaluated.
    NotACheckPoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<DecisionNote>,
}

impl Verdict {
    fn plain(decision: Decision) -> Self {
        Self {
            decision,
            note: None,
        }
    }
}

/// Applies the stopping rule to a statistic value (on the score scale) at a
/// check point.
///
/// A proven win certifies at once. Otherwise, from the minimum sample size
/// on, `S > h` certifies and `S < l` escalates; reaching the maximum sample
/// size without certifying escalates; anything else continues.
pub fn decide(
    counts: SampleCounts,
    proven: bool,
    score: f64,
    rule: &StoppingRule,
    scale: ScoreScale,
) -> Result<Verdict> {
    if score.is_nan() {
        return Err(AuditError::NotANumber {
            n: counts.n,
            winners: counts.winners,
        });
    }
    if proven {
        return Ok(Verdict::plain(Decision::CertifyProven));
    }
    if !rule.is_check_point(counts.n) {
        return Ok(Verdict {
            decision: Decision::Continue,
            note: Some(DecisionNote::NotACheckPoint),
        });
    }
    let (upper, lower) = rule.score_thresholds(scale);
    let below_lower = lower.is_some_and(|l| score < l);
    if counts.n >= rule.min_sample {
        if score > upper {
            return Ok(Verdict::plain(Decision::Certify));
        }
        if below_lower {
            return Ok(Verdict::plain(Decision::FullHandCount {
                reason: EscalationReason::LowerThreshold,
            }));
        }
    }
    if counts.n >= rule.max_sample {
        return Ok(Verdict::plain(Decision::FullHandCount {
            reason: EscalationReason::MaxSamples,
        }));
    }
    let note = (below_lower && counts.n < rule.min_sample)
        .then_some(DecisionNote::LowerThresholdBeforeMinimum);
    Ok(Verdict {
        decision: Decision::Continue,
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(n: u64) -> SampleCounts {
        SampleCounts { n, winners: n }
    }

    #[test]
    fn certify_and_escalate() {
        let rule = StoppingRule::new(20.0, 2000);
        let log = ScoreScale::Log;
        assert_eq!(
            decide(at(50), false, 21f64.ln(), &rule, log)
                .unwrap()
                .decision,
            Decision::Certify
        );
        assert_eq!(
            decide(at(50), false, 20f64.ln(), &rule, log)
                .unwrap()
                .decision,
            Decision::Continue
        );
        assert_eq!(
            decide(at(2000), false, 3f64.ln(), &rule, log)
                .unwrap()
                .decision,
            Decision::FullHandCount {
                reason: EscalationReason::MaxSamples
            }
        );
        assert!(decide(at(5), false, f64::NAN, &rule, log).is_err());
    }

    #[test]
    fn minimum_sample_size() {
        let rule = StoppingRule::new(20.0, 2000)
            .with_min_sample(300)
            .with_lower(0.5);
        let log = ScoreScale::Log;
        assert_eq!(
            decide(at(200), false, 1e6f64.ln(), &rule, log)
                .unwrap()
                .decision,
            Decision::Continue
        );
        let v = decide(at(200), false, 0.1f64.ln(), &rule, log).unwrap();
        assert_eq!(v.decision, Decision::Continue);
        assert_eq!(v.note, Some(DecisionNote::LowerThresholdBeforeMinimum));
        assert_eq!(
            decide(at(300), false, 0.1f64.ln(), &rule, log)
                .unwrap()
                .decision,
            Decision::FullHandCount {
                reason: EscalationReason::LowerThreshold
            }
        );
        assert_eq!(
            decide(at(10), true, 0.0, &rule, log).unwrap().decision,
            Decision::CertifyProven
        );
    }

    #[test]
    fn off_schedule_continues() {
        let rule =
            StoppingRule::new(20.0, 100).with_schedule(super::super::rule::Schedule::increment(10));
        let v = decide(at(15), false, 1e9, &rule, ScoreScale::Log).unwrap();
        assert_eq!(v.decision, Decision::Continue);
        assert_eq!(v.note, Some(DecisionNote::NotACheckPoint));
    }
}
