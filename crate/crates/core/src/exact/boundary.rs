//! Decision boundaries: for each check point, the smallest winner count
//! that certifies and the largest that escalates.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::engine::{proven_min_winners, StoppingRule};
use crate::error::{AuditError, Result};
use crate::method::{MethodSpec, ScoreScale};
use crate::sample::SamplingScheme;
use crate::stats::CountStatistic;

/// Memoized `(n, Y)` statistic values, shared across thresholds during calibration.
#[derive(Clone, Debug)]
pub struct ScoreCache {
    stat: CountStatistic,
    values: HashMap<(u64, u64), f64>,
}

impl ScoreCache {
    pub fn new(method: &MethodSpec, scheme: &SamplingScheme) -> Result<Self> {
        Ok(Self {
            stat: CountStatistic::new(method, scheme)?,
            values: HashMap::new(),
        })
    }

    pub fn scale(&self) -> ScoreScale {
        self.stat.scale()
    }

    pub fn score(&mut self, n: u64, winners: u64) -> Result<f64> {
        if let Some(&v) = self.values.get(&(n, winners)) {
            return Ok(v);
        }
        let v = self.stat.score(n, winners)?;
        self.values.insert((n, winners), v);
        Ok(v)
    }

    /// Smallest `Y` in `0..=n` with `score(n, Y) > threshold`, searching
    /// outward from `guess`. Assumes the statistic is nondecreasing in `Y`.
    pub fn first_above(&mut self, n: u64, threshold: f64, guess: u64) -> Result<Option<u64>> {
        self.first_where(n, guess, |s| s > threshold)
    }

    /// Smallest `Y` with `score(n, Y) >= threshold`.
    pub fn first_at_least(&mut self, n: u64, threshold: f64, guess: u64) -> Result<Option<u64>> {
        self.first_where(n, guess, |s| s >= threshold)
    }

    fn first_where(
        &mut self,
        n: u64,
        guess: u64,
        pred: impl Fn(f64) -> bool,
    ) -> Result<Option<u64>> {
        let g = guess.min(n);
        let (mut lo, mut hi); // pred(lo) false (or lo = -1), pred(hi) true
        if pred(self.score(n, g)?) {
            hi = g as i64;
            let mut step = 1i64;
            loop {
                let probe = hi - step;
                if probe < 0 {
                    lo = -1;
                    break;
                }
                if pred(self.score(n, probe as u64)?) {
                    hi = probe;
                    step *= 2;
                } else {
                    lo = probe;
                    break;
                }
            }
        } else {
            lo = g as i64;
            let mut step = 1i64;
            loop {
                let probe = lo + step;
                if probe > n as i64 {
                    if !pred(self.score(n, n)?) {
                        return Ok(None);
                    }
                    hi = n as i64;
                    break;
                }
                if pred(self.score(n, probe as u64)?) {
                    hi = probe;
                    break;
                }
                lo = probe;
                step *= 2;
            }
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if pred(self.score(n, mid as u64)?) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        // local monotonicity check just above the boundary
        if (hi as u64) < n && !pred(self.score(n, hi as u64 + 1)?) {
            return Err(AuditError::NonMonotone {
                n,
                winners: hi as u64 + 1,
            });
        }
        Ok(Some(hi as u64))
    }
}

/// Boundary at one check point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub n: u64,
    /// Smallest winner count with statistic above the upper threshold.
    pub certify_min: Option<u64>,
    /// Largest winner count with statistic below the lower threshold.
    pub escalate_max: Option<u64>,
}

/// Boundaries at every check point where the rule can stop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionBoundary {
    /// Check points at or above the minimum sample size, in order.
    pub points: Vec<BoundaryPoint>,
    /// Winner counts at or above this prove a win (sampling without replacement).
    pub proven_min: Option<u64>,
    pub max_sample: u64,
}

impl DecisionBoundary {
    pub fn point(&self, n: u64) -> Option<&BoundaryPoint> {
        self.points
            .binary_search_by_key(&n, |p| p.n)
            .ok()
            .map(|i| &self.points[i])
    }

    /// True when every certifying state has a sample majority for the reported winner.
    pub fn is_sample_coherent(&self) -> bool {
        self.points
            .iter()
            .all(|p| p.certify_min.is_none_or(|y| 2 * y > p.n))
    }

    /// The first check point whose certifying region is not a sample majority.
    pub fn coherence_violation(&self) -> Option<BoundaryPoint> {
        self.points
            .iter()
            .copied()
            .find(|p| p.certify_min.is_some_and(|y| 2 * y <= p.n))
    }
}

/// Computes the decision boundary of a `(n, Y)` statistic for `rule`.
pub fn compute_boundary(
    method: &MethodSpec,
    rule: &StoppingRule,
    scheme: &SamplingScheme,
) -> Result<DecisionBoundary> {
    rule.validate(method.score_scale(), scheme)?;
    let mut cache = ScoreCache::new(method, scheme)?;
    boundary_with_cache(&mut cache, method, rule, scheme)
}

/// As [`compute_boundary`], reusing statistic values from `cache`.
pub fn boundary_with_cache(
    cache: &mut ScoreCache,
    method: &MethodSpec,
    rule: &StoppingRule,
    scheme: &SamplingScheme,
) -> Result<DecisionBoundary> {
    let (upper, lower) = rule.score_thresholds(cache.scale());
    let mut points = Vec::new();
    let mut guess_up = 0u64;
    let mut guess_low = 0u64;
    for n in rule
        .check_points()
        .into_iter()
        .filter(|&n| n >= rule.min_sample)
    {
        let certify_min = cache.first_above(n, upper, guess_up.max(n / 2))?;
        if let Some(y) = certify_min {
            guess_up = y;
        }
        let escalate_max = match lower {
            Some(l) => {
                let first_ok = cache.first_at_least(n, l, guess_low.min(n))?;
                if let Some(y) = first_ok {
                    guess_low = y;
                }
                match first_ok {
                    Some(0) => None,
                    Some(y) => Some(y - 1),
                    None => Some(n),
                }
            }
            None => None,
        };
        points.push(BoundaryPoint {
            n,
            certify_min,
            escalate_max,
        });
    }
    Ok(DecisionBoundary {
        points,
        proven_min: proven_min_winners(scheme, method.null_mean()),
        max_sample: rule.max_sample,
    })
}

/// Scans every `Y` at every `n` in `1..=n_max` and reports the first place
/// the statistic decreases in `Y`.
pub fn check_monotone(method: &MethodSpec, scheme: &SamplingScheme, n_max: u64) -> Result<()> {
    let stat = CountStatistic::new(method, scheme)?;
    for n in 1..=n_max {
        let mut prev = f64::NEG_INFINITY;
        for y in 0..=n {
            let v = stat.score(n, y)?;
            if v < prev {
                return Err(AuditError::NonMonotone { n, winners: y });
            }
            prev = v;
        }
    }
    Ok(())
}
