//! Request and response bodies.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use pollaudit_core::bench::SimulationSettings;
use pollaudit_core::calibrate::{calibrate, nominal_threshold, Calibration, DEFAULT_TOLERANCE};
use pollaudit_core::engine::{
    ContestConfig, Decision, DecisionNote, ExtendedReal, RoundRecord, Schedule, SessionStatus,
    StoppingRule,
};
use pollaudit_core::exact::EvalResult;
use pollaudit_core::montecarlo::McResult;
use pollaudit_core::{MethodSpec, NominalScale, SamplingMode, SamplingScheme};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

fn scheme(mode: SamplingMode, total_ballots: Option<u64>) -> Result<SamplingScheme, ApiError> {
    let s = SamplingScheme {
        mode,
        total_ballots,
    };
    s.validate()?;
    Ok(s)
}

/// `POST /v1/contests`. Give either `alpha` (calibrate the upper threshold to
/// that maximum risk) or `upper` (use it as is).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContestRequest {
    pub scheme: SamplingMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_ballots: Option<u64>,
    pub method: MethodSpec,
    pub max_sample: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub min_sample: u64,
}

impl ContestRequest {
    /// Validates the request and settles the stopping rule, calibrating it
    /// when a risk limit was given.
    pub fn resolve(&self) -> Result<(ContestConfig, RuleSummary), ApiError> {
        let scheme = scheme(self.scheme, self.total_ballots)?;
        let upper = match (self.alpha, self.upper) {
            (Some(_), None) => 1.0,
            (None, Some(h)) => h,
            _ => {
                return Err(ApiError::BadRequest(
                    "give exactly one of alpha and upper".into(),
                ))
            }
        };
        let mut rule = StoppingRule::new(upper, self.max_sample)
            .with_schedule(self.schedule.clone())
            .with_min_sample(self.min_sample);
        rule.lower = self.lower;
        let config = ContestConfig {
            scheme,
            method: self.method.clone(),
            rule,
        };
        config.validate()?;
        let Some(alpha) = self.alpha else {
            let summary = RuleSummary::explicit(&config)?;
            return Ok((config, summary));
        };
        let cal = calibrate(
            &config.method,
            &config.rule,
            &scheme,
            alpha,
            DEFAULT_TOLERANCE,
        )?;
        let summary = RuleSummary::calibrated(&cal);
        Ok((
            ContestConfig {
                rule: cal.rule,
                ..config
            },
            summary,
        ))
    }
}

/// The stopping rule a contest runs under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleSummary {
    pub rule: StoppingRule,
    pub calibrated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub nominal_scale: NominalScale,
    pub nominal: f64,
    /// Maximum risk of the rule; reported only when it was calibrated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub achieved_risk: Option<f64>,
}

impl RuleSummary {
    fn explicit(config: &ContestConfig) -> Result<Self, ApiError> {
        Ok(Self {
            rule: config.rule.clone(),
            calibrated: false,
            alpha: None,
            nominal_scale: config.method.nominal_scale(),
            nominal: nominal_threshold(&config.method, &config.scheme, config.rule.upper)?,
            achieved_risk: None,
        })
    }

    fn calibrated(cal: &Calibration) -> Self {
        Self {
            rule: cal.rule.clone(),
            calibrated: true,
            alpha: Some(cal.alpha),
            nominal_scale: cal.nominal_scale,
            nominal: cal.nominal,
            achieved_risk: Some(cal.achieved_risk),
        }
    }
}

/// One round as stored and reported; a point on the statistic trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundView {
    pub sequence_number: u64,
    pub round_size: u64,
    pub round_winners: u64,
    pub n: u64,
    pub winners: u64,
    pub statistic: Option<ExtendedReal>,
    pub log_statistic: Option<ExtendedReal>,
    #[serde(flatten)]
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<DecisionNote>,
    pub timestamp: DateTime<Utc>,
}

impl RoundView {
    pub fn new(record: &RoundRecord) -> Self {
        Self {
            sequence_number: record.round_index + 1,
            round_size: record.interpretations.len(),
            round_winners: record.interpretations.winners(),
            n: record.n,
            winners: record.winners,
            statistic: record.statistic,
            log_statistic: record.log_statistic,
            decision: record.decision,
            note: record.note,
            timestamp: record.timestamp,
        }
    }
}

/// `GET /v1/contests/{id}`: everything needed to render a contest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContestView {
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub scheme: SamplingScheme,
    pub method: MethodSpec,
    pub summary: RuleSummary,
    pub status: SessionStatus,
    pub n: u64,
    pub winners: u64,
    /// Sequence number the next round must carry.
    pub next_sequence_number: u64,
    pub rounds: Vec<RoundView>,
}

/// `POST /v1/contests/{id}/rounds`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundRequest {
    /// One more than the number of rounds already recorded.
    pub sequence_number: u64,
    /// Ballot interpretations in draw order: 1 for the reported winner, 0 otherwise.
    pub interpretations: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundResponse {
    pub contest_id: String,
    pub round: RoundView,
    pub status: SessionStatus,
}

/// One cell of `GET /v1/contests/{id}/projection`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRow {
    pub round_size: u64,
    /// Hypothesized margin: winner share minus loser share.
    pub margin: f64,
    pub share: f64,
    pub end_n: u64,
    /// `None` when the sample so far is impossible under the hypothesis.
    pub certify_probability: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResponse {
    pub contest_id: String,
    pub n: u64,
    pub winners: u64,
    pub rows: Vec<ProjectionRow>,
}

/// `POST /v1/calibrate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateRequest {
    pub scheme: SamplingMode,
    #[serde(default)]
    pub total_ballots: Option<u64>,
    pub method: MethodSpec,
    pub max_sample: u64,
    pub alpha: f64,
    #[serde(default)]
    pub lower: Option<f64>,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub min_sample: u64,
    #[serde(default)]
    pub tolerance: Option<f64>,
}

impl CalibrateRequest {
    pub fn run(&self) -> Result<Calibration, ApiError> {
        let scheme = scheme(self.scheme, self.total_ballots)?;
        let mut template = StoppingRule::new(1.0, self.max_sample)
            .with_schedule(self.schedule.clone())
            .with_min_sample(self.min_sample);
        template.lower = self.lower;
        Ok(calibrate(
            &self.method,
            &template,
            &scheme,
            self.alpha,
            self.tolerance.unwrap_or(DEFAULT_TOLERANCE),
        )?)
    }
}

/// `POST /v1/evaluate`: performance of a fixed rule at each winner share.
/// Methods whose statistic depends on draw order need `simulation`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateRequest {
    pub scheme: SamplingMode,
    #[serde(default)]
    pub total_ballots: Option<u64>,
    pub method: MethodSpec,
    pub rule: StoppingRule,
    pub shares: Vec<f64>,
    #[serde(default)]
    pub include_pmf: bool,
    #[serde(default)]
    pub simulation: Option<SimulationSettings>,
}

impl EvaluateRequest {
    pub fn scheme(&self) -> Result<SamplingScheme, ApiError> {
        scheme(self.scheme, self.total_ballots)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluateCell {
    pub share: f64,
    pub power: f64,
    pub mean_sample_size: f64,
    pub full_count_probability: f64,
    pub escalation_probability: f64,
    /// Monte Carlo standard errors of power and mean sample size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_pmf: Option<BTreeMap<u64, f64>>,
}

impl EvaluateCell {
    pub fn exact(share: f64, r: EvalResult, include_pmf: bool) -> Self {
        Self {
            share,
            power: r.power,
            mean_sample_size: r.mean_sample_size,
            full_count_probability: r.full_count_mass,
            escalation_probability: r.escalate_pmf.values().fold(0.0, |a, b| a + b),
            stderr: None,
            stop_pmf: include_pmf.then_some(r.stop_pmf),
        }
    }

    pub fn simulated(share: f64, r: McResult, include_pmf: bool) -> Self {
        let trials = r.trials as f64;
        Self {
            share,
            power: r.power,
            mean_sample_size: r.mean_sample_size,
            full_count_probability: r.full_count as f64 / trials,
            escalation_probability: r.escalated as f64 / trials,
            stderr: Some((r.power_stderr, r.mean_stderr)),
            stop_pmf: include_pmf.then(|| {
                r.stop_counts
                    .iter()
                    .map(|(&n, &c)| (n, c as f64 / trials))
                    .collect()
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluateResponse {
    pub evaluator: pollaudit_core::bench::Evaluator,
    /// Exact maximum risk of the rule (exact evaluation only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_risk: Option<f64>,
    pub cells: Vec<EvaluateCell>,
}

/// One entry of `GET /v1/methods`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodInfo {
    pub kind: &'static str,
    pub description: &'static str,
    pub parameters: Vec<&'static str>,
    pub example: MethodSpec,
    pub nominal_scale: NominalScale,
}

pub fn method_catalog() -> Vec<MethodInfo> {
    let info = |kind, description, parameters: &[&'static str], example: MethodSpec| MethodInfo {
        kind,
        description,
        parameters: parameters.to_vec(),
        nominal_scale: example.nominal_scale(),
        example,
    };
    vec![
        info(
            "bayesian",
            "Bayes factor of a tie-or-loss against a win under a prior on the vote share",
            &["prior"],
            MethodSpec::bayesian_beta(1.0, 1.0),
        ),
        info(
            "bravo",
            "SPRT of a tie against a fixed alternative share p1",
            &["p1", "reported_share", "epsilon"],
            MethodSpec::bravo(0.55),
        ),
        info(
            "max-bravo",
            "BRAVO with the alternative set to the sample proportion",
            &[],
            MethodSpec::max_bravo(),
        ),
        info(
            "clip-audit",
            "Standardized difference of winner and loser counts",
            &[],
            MethodSpec::clip_audit(),
        ),
        info(
            "kmart",
            "Martingale test averaged over a weighting function",
            &["weight", "t"],
            MethodSpec::kmart(),
        ),
        info(
            "kaplan-wald",
            "Kaplan-Wald martingale with fixed gamma",
            &["gamma", "t"],
            MethodSpec::kaplan_wald(0.1),
        ),
        info(
            "kaplan-markov",
            "Kaplan-Markov martingale with fixed gamma",
            &["gamma", "t"],
            MethodSpec::kaplan_markov(0.1),
        ),
        info(
            "kaplan-kolmogorov",
            "Kaplan-Kolmogorov martingale with fixed gamma",
            &["gamma", "t"],
            MethodSpec::kaplan_kolmogorov(0.1),
        ),
    ]
}
