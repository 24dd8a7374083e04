//! Exact stopping-time distributions by forward propagation over `(n, Y)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::engine::StoppingRule;
use crate::error::{invalid, Result};
use crate::method::MethodSpec;
use crate::sample::{SampleCounts, SamplingMode, SamplingScheme, TrueTally};
use crate::special::NeumaierSum;

use super::boundary::{boundary_with_cache, DecisionBoundary, ScoreCache};

/// Exact (or simulated) performance of a stopping rule at one true tally.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub tally: TrueTally,
    /// Probability of certifying at exactly `n` draws (proven wins included).
    pub stop_pmf: BTreeMap<u64, f64>,
    pub certify_proven_mass: f64,
    /// Probability of escalating on the lower threshold at exactly `n` draws.
    pub escalate_pmf: BTreeMap<u64, f64>,
    /// Probability of reaching the maximum sample size without certifying.
    pub full_count_mass: f64,
    /// Total certification probability; the risk when the tally is a wrong outcome.
    pub power: f64,
    pub mean_sample_size: f64,
    pub max_sample: u64,
}

impl EvalResult {
    /// Total probability accounted for; one up to rounding.
    pub fn total_mass(&self) -> f64 {
        let mut s = NeumaierSum::default();
        s.add(self.power);
        for v in self.escalate_pmf.values() {
            s.add(*v);
        }
        s.add(self.full_count_mass);
        s.total()
    }

    /// Columnar export of the stopping distribution.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# pollaudit-pmf v1\nn,stop_mass,cumulative_mass\n");
        let mut cumulative = NeumaierSum::default();
        for (n, mass) in &self.stop_pmf {
            cumulative.add(*mass);
            let _ = writeln!(out, "{n},{mass:.17e},{:.17e}", cumulative.total());
        }
        out
    }
}

/// Worst-case wrong-outcome tally: a tie with replacement, `T = floor(N/2)` without.
pub fn worst_case_tally(scheme: &SamplingScheme) -> Result<TrueTally> {
    scheme.validate()?;
    Ok(match scheme.mode {
        SamplingMode::WithReplacement => TrueTally::share(0.5),
        SamplingMode::WithoutReplacement => {
            let total = scheme.require_total("the worst-case tally")?;
            TrueTally::count(total / 2, total)
        }
    })
}

/// Transition law of the draws.
#[derive(Clone, Copy, Debug)]
enum Law {
    Bernoulli(f64),
    Urn { winners: u64, total: u64 },
}

impl Law {
    fn new(scheme: &SamplingScheme, tally: &TrueTally) -> Result<Self> {
        Ok(match tally.for_scheme(scheme)? {
            TrueTally::Count { winners, total } => Law::Urn { winners, total },
            TrueTally::Share { p } => Law::Bernoulli(p),
        })
    }

    /// `(P(winner), P(loser))` for the next draw from state `(n, y)`.
    #[inline]
    fn step(&self, n: u64, y: u64) -> (f64, f64) {
        match *self {
            Law::Bernoulli(p) => (p, 1.0 - p),
            Law::Urn { winners, total } => {
                let left = (total - n) as f64;
                let w = winners.saturating_sub(y) as f64;
                let l = (total - winners).saturating_sub(n - y) as f64;
                (w / left, l / left)
            }
        }
    }

    fn state_possible(&self, n: u64, y: u64) -> bool {
        match *self {
            Law::Bernoulli(p) => (y == 0 || p > 0.0) && (y == n || p < 1.0),
            Law::Urn { winners, total } => y <= winners && n - y <= total - winners,
        }
    }
}

/// What happens at sample size `n` during propagation.
struct Checks<'a> {
    boundary: &'a DecisionBoundary,
    max_sample: u64,
}

/// Propagates probability mass from `start` to `end` draws, removing mass
/// that stops along the way.
fn propagate(
    start: SampleCounts,
    end: u64,
    law: Law,
    checks: &Checks<'_>,
    tally: TrueTally,
) -> EvalResult {
    let mut mass = vec![0.0f64; (end + 2) as usize];
    mass[start.winners as usize] = 1.0;
    let (mut lo, mut hi) = (start.winners as usize, start.winners as usize);
    let mut stop_pmf = BTreeMap::new();
    let mut escalate_pmf = BTreeMap::new();
    let mut proven_total = NeumaierSum::default();
    let mut full_count = 0.0;
    let mut alive = true;
    for n in start.n..end {
        // transition n -> n + 1, updating in place from the top down
        for y in (lo..=hi).rev() {
            let m = mass[y];
            if m == 0.0 {
                continue;
            }
            let (pw, pl) = law.step(n, y as u64);
            mass[y + 1] += m * pw;
            mass[y] = m * pl;
        }
        hi += 1;
        let n1 = n + 1;
        let mut stopped = NeumaierSum::default();
        if let Some(k) = checks.boundary.proven_min {
            let k = k as usize;
            if hi >= k {
                let mut proven = NeumaierSum::default();
                for slot in mass[k.max(lo)..=hi].iter_mut() {
                    proven.add(*slot);
                    *slot = 0.0;
                }
                proven_total.add(proven.total());
                stopped.add(proven.total());
                hi = k.saturating_sub(1).max(lo);
            }
        }
        if let Some(point) = checks.boundary.point(n1) {
            if let Some(c) = point.certify_min {
                let c = c as usize;
                if c <= hi {
                    for slot in mass[c.max(lo)..=hi].iter_mut() {
                        stopped.add(*slot);
                        *slot = 0.0;
                    }
                    hi = c.saturating_sub(1).max(lo);
                }
            }
            if let Some(e) = point.escalate_max {
                let e = e as usize;
                if e >= lo {
                    let mut esc = NeumaierSum::default();
                    for slot in mass[lo..=e.min(hi)].iter_mut() {
                        esc.add(*slot);
                        *slot = 0.0;
                    }
                    if esc.total() > 0.0 {
                        escalate_pmf.insert(n1, esc.total());
                    }
                    lo = (e + 1).min(hi);
                }
            }
        }
        if stopped.total() > 0.0 {
            stop_pmf.insert(n1, stopped.total());
        }
        if n1 == checks.max_sample {
            let rest: NeumaierSum = mass[lo..=hi].iter().copied().collect();
            full_count = rest.total();
            alive = false;
            break;
        }
    }
    if alive {
        // propagation ended before the maximum sample size (conditional projections)
        let rest: NeumaierSum = mass[lo..=hi.min(mass.len() - 1)].iter().copied().collect();
        full_count = rest.total();
    }
    let power: NeumaierSum = stop_pmf.values().copied().collect();
    let power = power.total();
    let mut mean = NeumaierSum::default();
    for (n, p) in stop_pmf.iter().chain(escalate_pmf.iter()) {
        mean.add(*n as f64 * p);
    }
    mean.add(end as f64 * full_count);
    EvalResult {
        tally,
        stop_pmf,
        certify_proven_mass: proven_total.total(),
        escalate_pmf,
        full_count_mass: full_count,
        power,
        mean_sample_size: mean.total(),
        max_sample: checks.max_sample,
    }
}

/// Exact stopping-time distribution of `rule` at the true `tally`.
pub fn forward_dp(
    method: &MethodSpec,
    rule: &StoppingRule,
    scheme: &SamplingScheme,
    tally: &TrueTally,
) -> Result<EvalResult> {
    let mut cache = ScoreCache::new(method, scheme)?;
    rule.validate(method.score_scale(), scheme)?;
    let boundary = boundary_with_cache(&mut cache, method, rule, scheme)?;
    forward_dp_with_boundary(&boundary, rule, scheme, tally)
}

/// Forward propagation with a precomputed boundary.
pub fn forward_dp_with_boundary(
    boundary: &DecisionBoundary,
    rule: &StoppingRule,
    scheme: &SamplingScheme,
    tally: &TrueTally,
) -> Result<EvalResult> {
    if scheme.is_without_replacement()
        && rule.max_sample > scheme.require_total("sampling without replacement")?
    {
        return invalid("maximum sample size exceeds the number of ballots cast");
    }
    let law = Law::new(scheme, tally)?;
    let checks = Checks {
        boundary,
        max_sample: rule.max_sample,
    };
    Ok(propagate(
        SampleCounts { n: 0, winners: 0 },
        rule.max_sample,
        law,
        &checks,
        tally.for_scheme(scheme)?,
    ))
}

/// Maximum risk: the certification probability at the worst-case tally.
pub fn max_risk(method: &MethodSpec, rule: &StoppingRule, scheme: &SamplingScheme) -> Result<f64> {
    Ok(forward_dp(method, rule, scheme, &worst_case_tally(scheme)?)?.power)
}

/// Conditional certification probability for one hypothesized tally and
/// next-round size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub tally: TrueTally,
    pub round_size: u64,
    /// Sample size at the end of the round (capped at the maximum).
    pub end_n: u64,
    /// `None` when the current sample is impossible under the tally.
    pub certify_probability: Option<f64>,
}

/// Probability of certifying by the end of a next round of each size,
/// starting from the current `state`, for each hypothesized tally. The rule
/// is evaluated once, at the end of the round; proven wins certify at once.
pub fn conditional_eval(
    state: SampleCounts,
    method: &MethodSpec,
    rule: &StoppingRule,
    scheme: &SamplingScheme,
    tallies: &[TrueTally],
    round_sizes: &[u64],
) -> Result<Vec<Projection>> {
    rule.validate(method.score_scale(), scheme)?;
    if state.winners > state.n || state.n > rule.max_sample {
        return invalid(format!(
            "state (n={}, Y={}) is outside the audit (maximum sample {})",
            state.n, state.winners, rule.max_sample
        ));
    }
    let mut cache = ScoreCache::new(method, scheme)?;
    let (upper, _) = rule.score_thresholds(cache.scale());
    let proven_min = crate::engine::proven_min_winners(scheme, method.null_mean());
    let mut out = Vec::with_capacity(tallies.len() * round_sizes.len());
    for tally in tallies {
        let law = Law::new(scheme, tally)?;
        let tally = tally.for_scheme(scheme)?;
        for &r in round_sizes {
            let end = (state.n + r).min(rule.max_sample);
            let probability = if !law.state_possible(state.n, state.winners) {
                None
            } else if end == state.n {
                let proven = proven_min.is_some_and(|k| state.winners >= k);
                let certified = state.n > 0
                    && state.n >= rule.min_sample
                    && cache.score(state.n, state.winners)? > upper;
                Some(if proven || certified { 1.0 } else { 0.0 })
            } else {
                let certify_min = if end >= rule.min_sample {
                    cache.first_above(end, upper, end / 2)?
                } else {
                    None
                };
                let boundary = DecisionBoundary {
                    points: vec![super::boundary::BoundaryPoint {
                        n: end,
                        certify_min,
                        escalate_max: None,
                    }],
                    proven_min,
                    max_sample: rule.max_sample,
                };
                let checks = Checks {
                    boundary: &boundary,
                    max_sample: rule.max_sample,
                };
                Some(propagate(state, end, law, &checks, tally).power)
            };
            out.push(Projection {
                tally,
                round_size: r,
                end_n: end,
                certify_probability: probability,
            });
        }
    }
    Ok(out)
}
