//! Monte Carlo simulation of audits, as a check on the exact evaluation and
//! for order-dependent statistics that the exact evaluation cannot handle.
//!
//! Trial `i` draws from a ChaCha20 generator seeded with `seed` on stream
//! `i`, so results do not depend on the number of worker threads. Uniforms
//! are the top 53 bits of a 64-bit output scaled by `2^-53`.

use std::collections::BTreeMap;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{decide, proven_min_winners, Decision, StoppingRule};
use crate::error::{invalid, AuditError, Result};
use crate::exact::{compute_boundary, worst_case_tally, DecisionBoundary};
use crate::method::MethodSpec;
use crate::sample::{SampleCounts, SamplingScheme, TrueTally};
use crate::stats::SequentialStatistic;

/// How a simulated audit ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrialOutcome {
    Certified { n: u64, proven: bool },
    Escalated { n: u64 },
    FullCount,
}

/// Aggregate results of a simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub tally: TrueTally,
    pub trials: u64,
    pub seed: u64,
    pub certified: u64,
    pub certified_proven: u64,
    pub escalated: u64,
    pub full_count: u64,
    pub power: f64,
    pub power_stderr: f64,
    pub mean_sample_size: f64,
    pub mean_stderr: f64,
    /// Number of trials certifying at each sample size.
    pub stop_counts: BTreeMap<u64, u64>,
    pub max_sample: u64,
}

impl McResult {
    /// CSV of the empirical stopping distribution with standard errors.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# pollaudit-mc v1\nn,stop_mass,stderr\n");
        let t = self.trials as f64;
        for (n, c) in &self.stop_counts {
            let p = *c as f64 / t;
            out.push_str(&format!(
                "{n},{p:.17e},{:.17e}\n",
                (p * (1.0 - p) / t).sqrt()
            ));
        }
        out
    }
}

#[derive(Clone, Debug, Default)]
struct Tally {
    certified: u64,
    proven: u64,
    escalated: u64,
    full_count: u64,
    sum_n: u128,
    sum_n2: u128,
    stops: BTreeMap<u64, u64>,
}

impl Tally {
    fn record(mut self, outcome: TrialOutcome, max_sample: u64) -> Self {
        let n = match outcome {
            TrialOutcome::Certified { n, proven } => {
                self.certified += 1;
                self.proven += proven as u64;
                *self.stops.entry(n).or_default() += 1;
                n
            }
            TrialOutcome::Escalated { n } => {
                self.escalated += 1;
                n
            }
            TrialOutcome::FullCount => {
                self.full_count += 1;
                max_sample
            }
        };
        self.sum_n += n as u128;
        self.sum_n2 += (n as u128) * (n as u128);
        self
    }

    fn merge(mut self, other: Tally) -> Self {
        self.certified += other.certified;
        self.proven += other.proven;
        self.escalated += other.escalated;
        self.full_count += other.full_count;
        self.sum_n += other.sum_n;
        self.sum_n2 += other.sum_n2;
        for (n, c) in other.stops {
            *self.stops.entry(n).or_default() += c;
        }
        self
    }
}

/// Source of ballot draws for one trial.
struct Urn {
    rng: ChaCha20Rng,
    law: TrueTally,
}

impl Urn {
    fn new(seed: u64, trial: u64, law: TrueTally) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(trial);
        Self { rng, law }
    }

    fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Next draw given the counts so far.
    fn draw(&mut self, counts: SampleCounts) -> bool {
        let u = self.uniform();
        match self.law {
            TrueTally::Share { p } => u < p,
            TrueTally::Count { winners, total } => {
                let left = (total - counts.n) as f64;
                u * left < (winners - counts.winners) as f64
            }
        }
    }
}

enum Runner {
    Boundary(DecisionBoundary),
    Sequential,
}

/// Simulates `trials` audits at the true `tally`.
pub fn simulate(
    method: &MethodSpec,
    rule: &StoppingRule,
    scheme: &SamplingScheme,
    tally: &TrueTally,
    trials: u64,
    seed: u64,
) -> Result<McResult> {
    if trials == 0 {
        return invalid("at least one trial is required");
    }
    method.validate()?;
    rule.validate(method.score_scale(), scheme)?;
    let law = tally.for_scheme(scheme)?;
    if let TrueTally::Count { total, .. } = law {
        if rule.max_sample > total {
            return invalid("maximum sample size exceeds the number of ballots cast");
        }
    }
    // (n, Y) statistics reduce to a precomputed boundary lookup per draw
    let runner = if method.is_order_dependent(scheme) {
        SequentialStatistic::new(method, scheme)?;
        Runner::Sequential
    } else {
        Runner::Boundary(compute_boundary(method, rule, scheme)?)
    };
    let proven_min = proven_min_winners(scheme, method.null_mean());
    let total = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut urn = Urn::new(seed, trial, law);
            match &runner {
                Runner::Boundary(b) => Ok(run_boundary(b, rule.max_sample, &mut urn)),
                Runner::Sequential => run_sequential(method, rule, scheme, proven_min, &mut urn),
            }
        })
        .try_fold(Tally::default, |acc, outcome: Result<TrialOutcome>| {
            Ok::<_, AuditError>(acc.record(outcome?, rule.max_sample))
        })
        .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))?;

    let t = trials as f64;
    let power = total.certified as f64 / t;
    let mean = total.sum_n as f64 / t;
    let var = (total.sum_n2 as f64 / t - mean * mean).max(0.0);
    Ok(McResult {
        tally: law,
        trials,
        seed,
        certified: total.certified,
        certified_proven: total.proven,
        escalated: total.escalated,
        full_count: total.full_count,
        power,
        power_stderr: (power * (1.0 - power) / t).sqrt(),
        mean_sample_size: mean,
        mean_stderr: (var / t).sqrt(),
        stop_counts: total.stops,
        max_sample: rule.max_sample,
    })
}

fn run_boundary(boundary: &DecisionBoundary, max_sample: u64, urn: &mut Urn) -> TrialOutcome {
    let mut counts = SampleCounts { n: 0, winners: 0 };
    let mut points = boundary.points.iter().peekable();
    while counts.n < max_sample {
        let winner = urn.draw(counts);
        counts.n += 1;
        counts.winners += winner as u64;
        if boundary.proven_min.is_some_and(|k| counts.winners >= k) {
            return TrialOutcome::Certified {
                n: counts.n,
                proven: true,
            };
        }
        while points.peek().is_some_and(|p| p.n < counts.n) {
            points.next();
        }
        if let Some(p) = points.peek().filter(|p| p.n == counts.n) {
            if p.certify_min.is_some_and(|c| counts.winners >= c) {
                return TrialOutcome::Certified {
                    n: counts.n,
                    proven: false,
                };
            }
            if p.escalate_max.is_some_and(|e| counts.winners <= e) {
                return TrialOutcome::Escalated { n: counts.n };
            }
        }
    }
    TrialOutcome::FullCount
}

fn run_sequential(
    method: &MethodSpec,
    rule: &StoppingRule,
    scheme: &SamplingScheme,
    proven_min: Option<u64>,
    urn: &mut Urn,
) -> Result<TrialOutcome> {
    let scale = method.score_scale();
    let mut stat = SequentialStatistic::new(method, scheme)?;
    loop {
        let winner = urn.draw(stat.counts());
        stat.push(winner)?;
        let counts = stat.counts();
        let proven = proven_min.is_some_and(|k| counts.winners >= k);
        if !proven && !rule.is_check_point(counts.n) {
            continue;
        }
        match decide(counts, proven, stat.score()?, rule, scale)?.decision {
            Decision::Continue => {}
            Decision::Certify => {
                return Ok(TrialOutcome::Certified {
                    n: counts.n,
                    proven: false,
                })
            }
            Decision::CertifyProven => {
                return Ok(TrialOutcome::Certified {
                    n: counts.n,
                    proven: true,
                })
            }
            Decision::FullHandCount { .. } if counts.n >= rule.max_sample => {
                return Ok(TrialOutcome::FullCount)
            }
            Decision::FullHandCount { .. } => return Ok(TrialOutcome::Escalated { n: counts.n }),
            Decision::ManualReview => {
                return Err(AuditError::NotANumber {
                    n: counts.n,
                    winners: counts.winners,
                })
            }
        }
    }
}

/// A threshold calibrated by simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McCalibration {
    pub rule: StoppingRule,
    pub raw_h: f64,
    pub alpha: f64,
    /// Fraction of null trials that certify under the calibrated rule.
    pub estimated_risk: f64,
    /// Normal-approximation confidence interval for the risk.
    pub risk_interval: (f64, f64),
    pub confidence: f64,
    pub trials: u64,
    pub seed: u64,
}

/// Calibrates the upper threshold by simulation at the worst-case tally.
///
/// Every trial runs to the maximum sample size and records the largest score
/// at any check point from the minimum sample size on (`+inf` once a win is
/// proven). The threshold is the smallest order statistic of these maxima
/// exceeded by at most `alpha * trials` of them, so all thresholds share the
/// same random numbers. A lower threshold would make the maxima depend on
/// the rule and is rejected.
pub fn calibrate_monte_carlo(
    method: &MethodSpec,
    template: &StoppingRule,
    scheme: &SamplingScheme,
    alpha: f64,
    trials: u64,
    seed: u64,
    confidence: f64,
) -> Result<McCalibration> {
    if !(alpha > 0.0 && alpha < 1.0) || !(confidence > 0.0 && confidence < 1.0) {
        return invalid("risk limit and confidence must lie in (0, 1)");
    }
    if template.lower.is_some() {
        return invalid("simulation calibration does not support a lower threshold");
    }
    if trials == 0 {
        return invalid("at least one trial is required");
    }
    let scale = method.score_scale();
    template
        .with_upper(scale.from_score(1.0))
        .validate(scale, scheme)?;
    SequentialStatistic::new(method, scheme)?;
    let law = worst_case_tally(scheme)?.for_scheme(scheme)?;
    let proven_min = proven_min_winners(scheme, method.null_mean());
    let mut maxima = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut urn = Urn::new(seed, trial, law);
            let mut stat = SequentialStatistic::new(method, scheme)?;
            let mut best = f64::NEG_INFINITY;
            while stat.counts().n < template.max_sample {
                stat.push(urn.draw(stat.counts()))?;
                let counts = stat.counts();
                if proven_min.is_some_and(|k| counts.winners >= k) {
                    return Ok(f64::INFINITY);
                }
                if counts.n >= template.min_sample && template.is_check_point(counts.n) {
                    best = best.max(stat.score()?);
                }
            }
            Ok(best)
        })
        .collect::<Result<Vec<f64>>>()?;
    maxima.sort_by(|a, b| b.total_cmp(a));
    let allowed = (alpha * trials as f64).floor() as usize;
    let x = maxima[allowed.min(maxima.len() - 1)];
    if !x.is_finite() {
        return Err(AuditError::CalibrationInfeasible(format!(
            "more than a fraction {alpha} of null trials prove a win or never exceed any threshold"
        )));
    }
    let exceed = maxima.iter().take_while(|&&v| v > x).count();
    let p = exceed as f64 / trials as f64;
    let z = normal_quantile(0.5 + confidence / 2.0);
    let half = z * (p * (1.0 - p) / trials as f64).sqrt();
    let raw_h = scale.from_score(x);
    Ok(McCalibration {
        rule: template.with_upper(raw_h),
        raw_h,
        alpha,
        estimated_risk: p,
        risk_interval: ((p - half).max(0.0), (p + half).min(1.0)),
        confidence,
        trials,
        seed,
    })
}

fn normal_quantile(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().inverse_cdf(p)
}
