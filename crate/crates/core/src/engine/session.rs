//! Live audit sessions: an append-only log of rounds and the running statistic.

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{AuditError, Result};
use crate::method::{MethodSpec, ScoreScale};
use crate::sample::{BallotSample, SampleCounts, SamplingScheme};
use crate::stats::{AccumulatorState, SequentialStatistic};

use super::decision::{decide, Decision, DecisionNote, Verdict};
use super::rule::StoppingRule;

/// A contest's sampling scheme, method and stopping rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContestConfig {
    pub scheme: SamplingScheme,
    pub method: MethodSpec,
    pub rule: StoppingRule,
}

impl ContestConfig {
    pub fn validate(&self) -> Result<()> {
        self.scheme.validate()?;
        self.method.validate()?;
        self.rule
            .validate(self.method.score_scale(), &self.scheme)?;
        SequentialStatistic::new(&self.method, &self.scheme).map(|_| ())
    }

    /// Smallest winner count that proves a win when sampling without replacement.
    pub fn proven_min_winners(&self) -> Option<u64> {
        proven_min_winners(&self.scheme, self.method.null_mean())
    }
}

/// `floor(N t) + 1` when sampling without replacement.
pub fn proven_min_winners(scheme: &SamplingScheme, t: f64) -> Option<u64> {
    if !scheme.is_without_replacement() {
        return None;
    }
    scheme
        .total_ballots
        .map(|n| (n as f64 * t).floor() as u64 + 1)
}

/// A real number that may be infinite; infinities are written as the strings
/// `"inf"` and `"-inf"` so the log stays valid JSON.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtendedReal(pub f64);

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for ExtendedReal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            f64::INFINITY => s.serialize_str("inf"),
            f64::NEG_INFINITY => s.serialize_str("-inf"),
            v => s.serialize_f64(v),
        }
    }
}

impl<'de> Deserialize<'de> for ExtendedReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(ExtendedReal(v)),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(ExtendedReal(f64::INFINITY)),
                "-inf" => Ok(ExtendedReal(f64::NEG_INFINITY)),
                other => Err(serde::de::Error::custom(format!(
                    "expected a number, \"inf\" or \"-inf\", got {other:?}"
                ))),
            },
        }
    }
}

/// One line of the session log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_index: u64,
    pub interpretations: BallotSample,
    pub n: u64,
    #[serde(rename = "Y")]
    pub winners: u64,
    /// Natural log of a ratio statistic; absent for ClipAudit.
    pub log_statistic: Option<ExtendedReal>,
    pub statistic: Option<ExtendedReal>,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<DecisionNote>,
    pub timestamp: DateTime<Utc>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionStatus {
    Open,
    Certified,
    FullCount,
    /// The statistic could not be evaluated; awaiting manual review.
    Frozen,
}

impl SessionStatus {
    pub fn is_open(&self) -> bool {
        matches!(self, SessionStatus::Open)
    }

    fn after(decision: Decision) -> Self {
        match decision {
            Decision::Continue => SessionStatus::Open,
            Decision::Certify | Decision::CertifyProven => SessionStatus::Certified,
            Decision::FullHandCount { .. } => SessionStatus::FullCount,
            Decision::ManualReview => SessionStatus::Frozen,
        }
    }
}

impl fmt::Display for SessionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SessionStatus::Open => "open",
            SessionStatus::Certified => "certified",
            SessionStatus::FullCount => "full-count",
            SessionStatus::Frozen => "frozen",
        })
    }
}

/// Result of appending a round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    /// The appended record; `None` for an empty round, which changes nothing.
    pub record: Option<RoundRecord>,
    pub verdict: Verdict,
}

/// A live audit of one contest.
#[derive(Clone, Debug)]
pub struct AuditSession {
    id: String,
    config: ContestConfig,
    rounds: Vec<RoundRecord>,
    statistic: SequentialStatistic,
    status: SessionStatus,
}

impl AuditSession {
    pub fn new(id: impl Into<String>, config: ContestConfig) -> Result<Self> {
        config.validate()?;
        let statistic = SequentialStatistic::new(&config.method, &config.scheme)?;
        Ok(Self {
            id: id.into(),
            config,
            rounds: Vec::new(),
            statistic,
            status: SessionStatus::Open,
        })
    }

    /// Rebuilds a session from its log, checking every stored statistic and
    /// decision against a fresh evaluation.
    pub fn replay(
        id: impl Into<String>,
        config: ContestConfig,
        records: &[RoundRecord],
    ) -> Result<Self> {
        let mut session = Self::new(id, config)?;
        for (i, rec) in records.iter().enumerate() {
            if rec.round_index != i as u64 {
                return Err(AuditError::ReplayMismatch {
                    round: rec.round_index,
                    detail: format!("expected round index {i}"),
                });
            }
            let bits: Vec<u8> = rec.interpretations.clone().into();
            let outcome = session.append_round_at(&bits, rec.timestamp)?;
            let fresh = outcome.record.ok_or_else(|| AuditError::ReplayMismatch {
                round: rec.round_index,
                detail: "logged round is empty".into(),
            })?;
            if let Some(detail) = record_difference(&fresh, rec) {
                return Err(AuditError::ReplayMismatch {
                    round: rec.round_index,
                    detail,
                });
            }
        }
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &ContestConfig {
        &self.config
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        &self.rounds
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn counts(&self) -> SampleCounts {
        self.statistic.counts()
    }

    pub fn accumulator(&self) -> AccumulatorState {
        self.statistic.snapshot()
    }

    /// Latest statistic on the score scale, if any round has been evaluated.
    pub fn last_score(&self) -> Option<f64> {
        self.rounds
            .last()
            .and_then(|r| match self.config.method.score_scale() {
                ScoreScale::Log => r.log_statistic.map(|v| v.0),
                ScoreScale::Raw => r.statistic.map(|v| v.0),
            })
    }

    pub fn append_round(&mut self, interpretations: &[u8]) -> Result<RoundOutcome> {
        self.append_round_at(interpretations, Utc::now())
    }

    /// Appends a round of ballot interpretations (1 = reported winner, 0 =
    /// reported loser) and applies the stopping rule at its end. The session
    /// is unchanged if the round is rejected.
    pub fn append_round_at(
        &mut self,
        interpretations: &[u8],
        timestamp: DateTime<Utc>,
    ) -> Result<RoundOutcome> {
        if !self.status.is_open() {
            return Err(AuditError::SessionClosed {
                status: self.status.to_string(),
            });
        }
        let sample = BallotSample::from_bits(interpretations)?;
        let counts = self.statistic.counts();
        if sample.is_empty() {
            let note = (counts.n > 0).then_some(DecisionNote::NotACheckPoint);
            return Ok(RoundOutcome {
                record: None,
                verdict: Verdict {
                    decision: Decision::Continue,
                    note,
                },
            });
        }
        let n = counts.n + sample.len();
        if n > self.config.rule.max_sample {
            return Err(AuditError::MalformedRound(format!(
                "round of {} ballots would take the sample to {n}, beyond the maximum of {}",
                sample.len(),
                self.config.rule.max_sample
            )));
        }
        if let Some(total) = self
            .config
            .scheme
            .total_ballots
            .filter(|_| self.config.scheme.is_without_replacement())
        {
            if n > total {
                return Err(AuditError::MalformedRound(format!(
                    "sample of {n} exceeds the {total} ballots cast"
                )));
            }
        }
        let mut statistic = self.statistic.clone();
        for &x in sample.draws() {
            statistic.push(x)?;
        }
        let counts = statistic.counts();
        let proven = self
            .config
            .proven_min_winners()
            .is_some_and(|k| counts.winners >= k);
        let scale = self.config.method.score_scale();
        let score = statistic.score();
        let (log_statistic, value, verdict) = match score {
            Ok(s) => {
                let verdict = decide(counts, proven, s, &self.config.rule, scale)?;
                match scale {
                    ScoreScale::Log => {
                        (Some(ExtendedReal(s)), Some(ExtendedReal(s.exp())), verdict)
                    }
                    ScoreScale::Raw => (None, Some(ExtendedReal(s)), verdict),
                }
            }
            Err(_) if proven => (
                None,
                None,
                Verdict {
                    decision: Decision::CertifyProven,
                    note: None,
                },
            ),
            Err(_) => (
                None,
                None,
                Verdict {
                    decision: Decision::ManualReview,
                    note: None,
                },
            ),
        };
        let record = RoundRecord {
            round_index: self.rounds.len() as u64,
            interpretations: sample,
            n: counts.n,
            winners: counts.winners,
            log_statistic,
            statistic: value,
            decision: verdict.decision,
            note: verdict.note,
            timestamp,
        };
        self.statistic = statistic;
        self.status = SessionStatus::after(verdict.decision);
        self.rounds.push(record.clone());
        Ok(RoundOutcome {
            record: Some(record),
            verdict,
        })
    }
}

fn bits_equal(a: Option<ExtendedReal>, b: Option<ExtendedReal>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => x.0.to_bits() == y.0.to_bits(),
        _ => false,
    }
}

fn record_difference(fresh: &RoundRecord, logged: &RoundRecord) -> Option<String> {
    if fresh.n != logged.n || fresh.winners != logged.winners {
        return Some(format!(
            "counts (n={}, Y={}) differ from logged (n={}, Y={})",
            fresh.n, fresh.winners, logged.n, logged.winners
        ));
    }
    if !bits_equal(fresh.log_statistic, logged.log_statistic)
        || !bits_equal(fresh.statistic, logged.statistic)
    {
        return Some(format!(
            "statistic {:?}/{:?} differs from logged {:?}/{:?}",
            fresh.log_statistic, fresh.statistic, logged.log_statistic, logged.statistic
        ));
    }
    if fresh.decision != logged.decision || fresh.note != logged.note {
        return Some(format!(
            "decision {:?} differs from logged {:?}",
            fresh.decision, logged.decision
        ));
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::decision::EscalationReason;

    fn bravo_config(total: u64, m: u64) -> ContestConfig {
        ContestConfig {
            scheme: SamplingScheme::with_replacement(),
            method: MethodSpec::bravo(0.55),
            rule: StoppingRule::new(20.0, m),
        }
        .with_total(total)
    }

    impl ContestConfig {
        fn with_total(mut self, total: u64) -> Self {
            self.scheme.total_ballots = Some(total);
            self
        }
    }

    fn round(winners: usize, losers: usize) -> Vec<u8> {
        let mut v = vec![1u8; winners];
        v.extend(std::iter::repeat_n(0u8, losers));
        v
    }

    #[test]
    fn bravo_boundary_at_sixty() {
        for (y, expect) in [(47, Decision::Certify), (46, Decision::Continue)] {
            let mut s = AuditSession::new("c", bravo_config(20_000, 2000)).unwrap();
            let out = s.append_round(&round(y, 60 - y)).unwrap();
            assert_eq!(out.verdict.decision, expect, "Y={y}");
        }
    }

    #[test]
    fn empty_round_is_a_no_op() {
        let mut s = AuditSession::new("c", bravo_config(100, 50)).unwrap();
        let out = s.append_round(&[]).unwrap();
        assert_eq!(out.verdict.decision, Decision::Continue);
        assert!(out.record.is_none() && s.rounds().is_empty());
    }

    #[test]
    fn proven_win_without_replacement() {
        let config = ContestConfig {
            scheme: SamplingScheme::without_replacement(20),
            method: MethodSpec::bravo(0.7),
            rule: StoppingRule::new(1e12, 20),
        };
        let mut s = AuditSession::new("c", config).unwrap();
        assert_eq!(
            s.append_round(&round(10, 0)).unwrap().verdict.decision,
            Decision::Continue
        );
        assert_eq!(
            s.append_round(&[1]).unwrap().verdict.decision,
            Decision::CertifyProven
        );
        assert!(matches!(
            s.append_round(&[1]),
            Err(AuditError::SessionClosed { .. })
        ));
    }

    #[test]
    fn rejects_bad_rounds_without_change() {
        let mut s = AuditSession::new("c", bravo_config(100, 10)).unwrap();
        s.append_round(&[1, 0]).unwrap();
        assert!(matches!(
            s.append_round(&[1, 7]),
            Err(AuditError::MalformedRound(_))
        ));
        assert!(s.append_round(&round(5, 4)).is_err());
        assert_eq!(s.counts(), SampleCounts { n: 2, winners: 1 });
        let out = s.append_round(&round(3, 5)).unwrap();
        assert_eq!(
            out.verdict.decision,
            Decision::FullHandCount {
                reason: EscalationReason::MaxSamples
            }
        );
        assert_eq!(s.status(), SessionStatus::FullCount);
    }

    #[test]
    fn log_round_trips_through_json() {
        let mut s = AuditSession::new("c", bravo_config(1000, 200)).unwrap();
        s.append_round(&[1, 0, 1, 1, 0, 1]).unwrap();
        s.append_round(&[0, 0, 1]).unwrap();
        let lines: Vec<String> = s
            .rounds()
            .iter()
            .map(|r| serde_json::to_string(r).unwrap())
            .collect();
        let back: Vec<RoundRecord> = lines
            .iter()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        let replayed = AuditSession::replay("c", s.config().clone(), &back).unwrap();
        assert_eq!(replayed.rounds(), s.rounds());
        let mut tampered = back.clone();
        tampered[1].decision = Decision::Certify;
        assert!(matches!(
            AuditSession::replay("c", s.config().clone(), &tampered),
            Err(AuditError::ReplayMismatch { round: 1, .. })
        ));
    }

    #[test]
    fn infinities_serialize_as_strings() {
        let v = serde_json::to_string(&ExtendedReal(f64::INFINITY)).unwrap();
        assert_eq!(v, "\"inf\"");
        let back: ExtendedReal = serde_json::from_str("\"-inf\"").unwrap();
        assert_eq!(back.0, f64::NEG_INFINITY);
        let x: ExtendedReal = serde_json::from_str("1.5").unwrap();
        assert_eq!(x.0, 1.5);
    }
}
