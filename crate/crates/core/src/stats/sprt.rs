//! Likelihood-ratio statistics: BRAVO, MaxBRAVO and the point-pair SPRT.

use std::f64::consts::LN_2;

use crate::error::{domain, invalid, AuditError, Result};
use crate::sample::{BallotSample, SampleCounts, SamplingScheme, StatisticForm};
use crate::special::xlogy;

use super::likelihood::{ln_binomial_sequence, ln_hyper_numerator};

/// Winner tally used for a hypothesized share `p` of `total` ballots. Under
/// the alternative the tally is pushed strictly above a tie, under the null
/// it is capped at the worst case `floor(N/2)`.
pub(crate) fn alternative_tally(p: f64, total: u64) -> u64 {
    ((p * total as f64).round() as u64)
        .max(total / 2 + 1)
        .min(total)
}

pub(crate) fn null_tally(p: f64, total: u64) -> u64 {
    ((p * total as f64).round() as u64).min(total / 2)
}

/// True when the sample alone proves the winner has more than `t N` votes.
pub(crate) fn proven_win(winners: u64, total: u64, t: f64) -> bool {
    winners as f64 > t * total as f64
}

/// Log likelihood ratio of the point alternative `p1` against the point null `p0`.
///
/// Without replacement the hypergeometric likelihoods are evaluated at the
/// tallies from [`alternative_tally`] and [`null_tally`]. A sample proving a
/// majority gives `+∞`; a sample impossible under the alternative gives `-∞`.
pub fn log_point_pair_ratio(
    counts: SampleCounts,
    p0: f64,
    p1: f64,
    form: StatisticForm,
    total: Option<u64>,
) -> Result<f64> {
    let SampleCounts { n, winners } = counts;
    match form {
        StatisticForm::WithReplacement => {
            let l1 = ln_binomial_sequence(n, winners, p1);
            let l0 = ln_binomial_sequence(n, winners, p0);
            Ok(match (l1 == f64::NEG_INFINITY, l0 == f64::NEG_INFINITY) {
                (true, true) => {
                    return Err(AuditError::Domain(format!(
                        "sample (n={n}, Y={winners}) is impossible under both p0={p0} and p1={p1}"
                    )))
                }
                (true, false) => f64::NEG_INFINITY,
                (false, true) => f64::INFINITY,
                (false, false) => l1 - l0,
            })
        }
        StatisticForm::WithoutReplacement => {
            let total = total.ok_or_else(|| {
                AuditError::InvalidConfig(
                    "without-replacement likelihood requires total_ballots".into(),
                )
            })?;
            if n > total {
                return domain(format!(
                    "sample of {n} draws exceeds the {total} ballots cast"
                ));
            }
            if proven_win(winners, total, 0.5) {
                return Ok(f64::INFINITY);
            }
            let l1 = ln_hyper_numerator(n, winners, alternative_tally(p1, total), total);
            if l1 == f64::NEG_INFINITY {
                return Ok(f64::NEG_INFINITY);
            }
            let l0 = ln_hyper_numerator(n, winners, null_tally(p0, total), total);
            if l0 == f64::NEG_INFINITY {
                return Ok(f64::INFINITY);
            }
            Ok(l1 - l0)
        }
    }
}

/// Log of the BRAVO statistic (SPRT of `p1` against a tie).
pub fn log_bravo(
    counts: SampleCounts,
    p1: f64,
    form: StatisticForm,
    total: Option<u64>,
) -> Result<f64> {
    if !(p1 > 0.5 && p1 <= 1.0) {
        return invalid(format!("BRAVO requires 0.5 < p1 <= 1 (got {p1})"));
    }
    if form == StatisticForm::WithReplacement {
        // (p1/0.5)^Y ((1-p1)/0.5)^(n-Y), kept separate from the generic ratio
        let y = counts.winners as f64;
        return Ok(xlogy(y, 2.0 * p1) + xlogy(counts.n as f64 - y, 2.0 * (1.0 - p1)));
    }
    log_point_pair_ratio(counts, 0.5, p1, form, total)
}

/// BRAVO statistic on the linear scale (saturates to infinity).
pub fn bravo_statistic(sample: &BallotSample, p1: f64, scheme: &SamplingScheme) -> Result<f64> {
    scheme.validate()?;
    scheme.check_sample_size(sample.len())?;
    Ok(log_bravo(
        sample.counts(),
        p1,
        scheme.mode.into(),
        scheme.total_ballots,
    )?
    .exp())
}

/// Log of the MaxBRAVO statistic: the likelihood ratio maximized over
/// `p1 ∈ (1/2, 1]`, which is 1 whenever the sample share is at most one half.
/// The hypergeometric form maximizes over tallies instead and needs `total`.
pub fn log_max_bravo(counts: SampleCounts, form: StatisticForm, total: Option<u64>) -> Result<f64> {
    let SampleCounts { n, winners } = counts;
    if form == StatisticForm::WithoutReplacement {
        let total = total.ok_or_else(|| {
            AuditError::InvalidConfig("hypergeometric MaxBRAVO requires total_ballots".into())
        })?;
        if n > total {
            return invalid(format!("sample size {n} exceeds the {total} ballots cast"));
        }
        return log_max_bravo_hyper(counts, total);
    }
    if n == 0 {
        return domain("MaxBRAVO is undefined for an empty sample");
    }
    if 2 * winners <= n {
        return Ok(0.0);
    }
    let (y, l) = (winners as f64, (n - winners) as f64);
    let nf = n as f64;
    Ok(nf * LN_2 + xlogy(y, y / nf) + xlogy(l, l / nf))
}

/// Hypergeometric MaxBRAVO: the likelihood maximized over integer tallies
/// `T1 > N/2`, against the worst-case null tally. The likelihood is
/// log-concave in `T1`, so the maximum sits next to `floor(Y (N+1) / n)`.
fn log_max_bravo_hyper(counts: SampleCounts, total: u64) -> Result<f64> {
    let SampleCounts { n, winners } = counts;
    if n == 0 {
        return domain("MaxBRAVO is undefined for an empty sample");
    }
    if 2 * winners <= n {
        return Ok(0.0);
    }
    let t0 = total / 2;
    if winners > t0 {
        return Ok(f64::INFINITY);
    }
    let base = ln_hyper_numerator(n, winners, t0, total);
    let (lo, hi) = ((t0 + 1).max(winners), total - (n - winners));
    let mle = (winners as f64 * (total as f64 + 1.0) / n as f64).floor() as u64;
    let best = [mle.saturating_sub(1), mle, mle + 1]
        .into_iter()
        .map(|t| ln_hyper_numerator(n, winners, t.clamp(lo, hi), total) - base)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(best.max(0.0))
}

pub fn maxbravo_statistic(sample: &BallotSample) -> Result<f64> {
    Ok(log_max_bravo(sample.counts(), StatisticForm::WithReplacement, None)?.exp())
}
