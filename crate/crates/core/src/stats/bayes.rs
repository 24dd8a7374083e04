//! Bayesian audit statistics: Bayes factors, posterior odds and upset
//! probabilities for point-pair, beta, beta-binomial and risk-maximizing priors.

use std::f64::consts::LN_2;

use crate::error::{domain, invalid, AuditError, Result};
use crate::method::MethodSpec;
use crate::prior::{PriorSpec, WeightFn};
use crate::sample::{BallotSample, SampleCounts, SamplingScheme, StatisticForm};
use crate::special::{
    integrate_adaptive, ln_beta, ln_choose, ln_reg_inc_beta, ln_reg_inc_beta_upper, log1mexp,
    log_add_exp, log_sum_exp, xlogy, NeumaierSum,
};

use super::likelihood::ln_binomial_sequence;
use super::sprt::log_point_pair_ratio;

const QUAD_REL_TOL: f64 = 1e-12;

/// Log probabilities `(ln P(U <= k), ln P(U > k))` for `U ~ BetaBinomial(size, alpha, beta)`.
///
/// For log-concave cases (`alpha, beta >= 1`) only the tail away from the
/// mode is summed, stopping once terms are negligible; the other follows by
/// complement. Otherwise every term is summed.
pub fn beta_binomial_log_tails(size: u64, alpha: f64, beta: f64, k: i64) -> (f64, f64) {
    if k < 0 {
        return (f64::NEG_INFINITY, 0.0);
    }
    if k as u64 >= size {
        return (0.0, f64::NEG_INFINITY);
    }
    let k = k as u64;
    let lnb0 = ln_beta(alpha, beta);
    let log_pmf =
        |j: u64| ln_choose(size, j) + ln_beta(j as f64 + alpha, (size - j) as f64 + beta) - lnb0;
    // pmf(j + 1) / pmf(j)
    let ratio = |j: u64| {
        (size - j) as f64 * (j as f64 + alpha) / ((j + 1) as f64 * ((size - j - 1) as f64 + beta))
    };
    if alpha >= 1.0 && beta >= 1.0 {
        let mut sum = NeumaierSum::default();
        sum.add(1.0);
        let mut term = 1.0;
        if ratio(k) < 1.0 {
            let anchor = log_pmf(k + 1);
            for j in k + 1..size {
                term *= ratio(j);
                if term < 1e-18 * sum.total() {
                    break;
                }
                sum.add(term);
            }
            let upper = (anchor + sum.total().ln()).min(0.0);
            (log1mexp(upper), upper)
        } else {
            let anchor = log_pmf(k);
            for j in (0..k).rev() {
                term /= ratio(j);
                if term < 1e-18 * sum.total() {
                    break;
                }
                sum.add(term);
            }
            let lower = (anchor + sum.total().ln()).min(0.0);
            (lower, log1mexp(lower))
        }
    } else {
        let terms: Vec<f64> = (0..=size).map(log_pmf).collect();
        let (lo, hi) = terms.split_at(k as usize + 1);
        (log_sum_exp(lo), log_sum_exp(hi))
    }
}

/// `ln ∫_{1/2}^{1} exp(ψ(p)) dp` by adaptive quadrature, where `peak` is a
/// hint for the location of the maximum of `ψ` and `scale` its width.
fn ln_integral_above_half<F: Fn(f64) -> f64>(psi: F, peak: f64, scale: f64) -> Result<f64> {
    let mut shift = f64::NEG_INFINITY;
    let mut argmax = peak.clamp(0.5, 1.0);
    let grid = (1..256)
        .map(|i| 0.5 + 0.5 * i as f64 / 256.0)
        .chain(std::iter::once(argmax));
    for p in grid {
        let v = psi(p);
        if v > shift {
            shift = v;
            argmax = p;
        }
    }
    if !shift.is_finite() {
        return Err(AuditError::Quadrature(format!(
            "integrand has no finite value on (1/2, 1] (max {shift})"
        )));
    }
    let mut breaks = vec![0.5, 1.0];
    for m in [1.0, 3.0, 8.0, 20.0] {
        for p in [argmax - m * scale, argmax + m * scale] {
            if p > 0.5 && p < 1.0 {
                breaks.push(p);
            }
        }
    }
    if argmax > 0.5 && argmax < 1.0 {
        breaks.push(argmax);
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let value = integrate_adaptive(|p| (psi(p) - shift).exp(), &breaks, QUAD_REL_TOL)?;
    if !(value > 0.0) {
        return Err(AuditError::Quadrature(format!(
            "integral over (1/2, 1] evaluated to {value}"
        )));
    }
    Ok(shift + value.ln())
}

/// `ln ∫_{1/2}^{1} p^(α-1) (1-p)^(β-1) dp` by quadrature.
fn ln_upper_beta_integral(alpha: f64, beta: f64) -> Result<f64> {
    let psi = |p: f64| xlogy(alpha - 1.0, p) + xlogy(beta - 1.0, 1.0 - p);
    let (peak, count) = if alpha + beta > 2.0 {
        ((alpha - 1.0) / (alpha + beta - 2.0), alpha + beta)
    } else {
        (1.0, 2.0)
    };
    let scale = (peak.clamp(0.05, 0.95) * (1.0 - peak.clamp(0.05, 0.95)) / count).sqrt();
    ln_integral_above_half(psi, peak, scale)
}

/// Log prior odds `ln[Pr(H1) / Pr(H0)]`.
pub fn log_prior_odds(prior: &PriorSpec, form: StatisticForm, total: Option<u64>) -> Result<f64> {
    prior.validate()?;
    match prior {
        PriorSpec::PointPair {
            weight0, weight1, ..
        } => Ok(weight1.ln() - weight0.ln()),
        PriorSpec::RiskMaximizing { .. } | PriorSpec::WeightedKmart { .. } => Ok(0.0),
        _ => log_posterior_odds(SampleCounts { n: 0, winners: 0 }, prior, form, total),
    }
}

/// Log posterior odds `ln[Pr(H1 | Y_n) / Pr(H0 | Y_n)]`, where `H0` is a true
/// share of at most one half (a true tally of at most `floor(N/2)`).
///
/// Returns `+∞` when the sample proves the reported winner won and `-∞`
/// when it rules the alternative out.
pub fn log_posterior_odds(
    counts: SampleCounts,
    prior: &PriorSpec,
    form: StatisticForm,
    total: Option<u64>,
) -> Result<f64> {
    let SampleCounts { n, winners } = counts;
    if winners > n {
        return invalid(format!("winner count {winners} exceeds sample size {n}"));
    }
    match (prior, form) {
        (PriorSpec::PointPair { p0, p1, weight0, weight1 }, _) => {
            let lr = log_point_pair_ratio(counts, *p0, *p1, form, total)?;
            Ok(lr + weight1.ln() - weight0.ln())
        }
        (PriorSpec::Beta { a, b }, StatisticForm::WithReplacement) => {
            let (alpha, beta) = (a + winners as f64, b + (n - winners) as f64);
            Ok(ln_reg_inc_beta_upper(0.5, alpha, beta)? - ln_reg_inc_beta(0.5, alpha, beta)?)
        }
        (PriorSpec::Beta { a, b }, StatisticForm::WithoutReplacement) => {
            let total_ballots = require_total(total)?;
            beta_binomial_hyper_odds(counts, total_ballots, *a, *b)
        }
        (PriorSpec::BetaBinomial { total_ballots, a, b }, StatisticForm::WithoutReplacement) => {
            if let Some(t) = total {
                if t != *total_ballots {
                    return invalid(format!("beta-binomial prior is over {total_ballots} ballots but the contest has {t}"));
                }
            }
            beta_binomial_hyper_odds(counts, *total_ballots, *a, *b)
        }
        (PriorSpec::BetaBinomial { total_ballots, a, b }, StatisticForm::WithReplacement) => {
            beta_binomial_binomial_odds(counts, *total_ballots, *a, *b)
        }
        (PriorSpec::RiskMaximizing { a, b }, StatisticForm::WithReplacement) => {
            let peak_count = (a + b + n as f64).max(2.0);
            let peak = (winners as f64 + a - 1.0).max(0.0) / (peak_count - 2.0).max(1.0);
            let scale = (0.25 / peak_count).sqrt();
            let (y, l) = (winners as f64 + a - 1.0, (n - winners) as f64 + b - 1.0);
            let num = ln_integral_above_half(|p| xlogy(y, p) + xlogy(l, 1.0 - p), peak, scale)?;
            Ok(n as f64 * LN_2 + num - ln_upper_beta_integral(*a, *b)?)
        }
        (PriorSpec::WeightedKmart { weight }, StatisticForm::WithReplacement) => {
            weighted_kmart_odds(counts, weight)
        }
        (PriorSpec::RiskMaximizing { .. } | PriorSpec::WeightedKmart { .. }, StatisticForm::WithoutReplacement) => {
            Err(AuditError::Unsupported(
                "risk-maximizing priors use the binomial likelihood; use KMart for sampling without replacement".into(),
            ))
        }
    }
}

fn require_total(total: Option<u64>) -> Result<u64> {
    total.ok_or_else(|| {
        AuditError::InvalidConfig("without-replacement likelihood requires total_ballots".into())
    })
}

/// Conjugate update: with `T ~ BetaBinomial(N, a, b)` and a hypergeometric
/// sample, `T - Y ~ BetaBinomial(N - n, a + Y, b + n - Y)`.
fn beta_binomial_hyper_odds(counts: SampleCounts, total: u64, a: f64, b: f64) -> Result<f64> {
    let SampleCounts { n, winners } = counts;
    if n > total {
        return domain(format!(
            "sample of {n} draws exceeds the {total} ballots cast"
        ));
    }
    let k = (total / 2) as i64 - winners as i64;
    let (lo, hi) =
        beta_binomial_log_tails(total - n, a + winners as f64, b + (n - winners) as f64, k);
    Ok(hi - lo)
}

/// Beta-binomial prior on the tally with the binomial likelihood at `p = T/N`.
fn beta_binomial_binomial_odds(counts: SampleCounts, total: u64, a: f64, b: f64) -> Result<f64> {
    let lnb0 = ln_beta(a, b);
    let mut null = Vec::new();
    let mut alt = Vec::new();
    for t in 0..=total {
        let prior = ln_choose(total, t) + ln_beta(t as f64 + a, (total - t) as f64 + b) - lnb0;
        let v = prior + ln_binomial_sequence(counts.n, counts.winners, t as f64 / total as f64);
        if 2 * t <= total {
            null.push(v);
        } else {
            alt.push(v);
        }
    }
    Ok(log_sum_exp(&alt) - log_sum_exp(&null))
}

/// Prior with mass 1/2 at a tie and density proportional to `g(2p - 1)` above it.
fn weighted_kmart_odds(counts: SampleCounts, weight: &WeightFn) -> Result<f64> {
    let SampleCounts { n, winners } = counts;
    let (y, l) = (winners as f64, (n - winners) as f64);
    let peak = if n == 0 { 0.75 } else { y / n as f64 };
    let scale = (0.25 / (n as f64 + 2.0)).sqrt();
    let log_g = |p: f64| weight.eval(2.0 * p - 1.0).ln();
    let num = ln_integral_above_half(|p| xlogy(y, p) + xlogy(l, 1.0 - p) + log_g(p), peak, scale)?;
    let den = ln_integral_above_half(log_g, 0.75, 0.25)?;
    Ok(n as f64 * LN_2 + num - den)
}

/// Log Bayes factor: log posterior odds minus log prior odds.
pub fn log_bayes_factor(
    counts: SampleCounts,
    prior: &PriorSpec,
    form: StatisticForm,
    total: Option<u64>,
) -> Result<f64> {
    let prior_odds = log_prior_odds(prior, form, total)?;
    if !prior_odds.is_finite() {
        return domain(format!(
            "prior {} puts no mass on one hypothesis",
            prior.label()
        ));
    }
    Ok(log_posterior_odds(counts, prior, form, total)? - prior_odds)
}

fn default_form(prior: &PriorSpec, scheme: &SamplingScheme) -> StatisticForm {
    MethodSpec::bayesian(prior.clone()).form(scheme)
}

/// Bayes factor for the sample (linear scale, saturating to infinity).
pub fn bayes_factor(
    sample: &BallotSample,
    prior: &PriorSpec,
    scheme: &SamplingScheme,
) -> Result<f64> {
    scheme.validate()?;
    scheme.check_sample_size(sample.len())?;
    Ok(log_bayes_factor(
        sample.counts(),
        prior,
        default_form(prior, scheme),
        scheme.total_ballots,
    )?
    .exp())
}

/// Posterior probability that the reported winner lost, `1 / (1 + posterior odds)`.
pub fn upset_probability(
    sample: &BallotSample,
    prior: &PriorSpec,
    scheme: &SamplingScheme,
) -> Result<f64> {
    scheme.validate()?;
    scheme.check_sample_size(sample.len())?;
    prior.validate()?;
    let odds = log_posterior_odds(
        sample.counts(),
        prior,
        default_form(prior, scheme),
        scheme.total_ballots,
    )?;
    Ok(upset_from_log_odds(odds))
}

pub fn upset_from_log_odds(log_odds: f64) -> f64 {
    if log_odds == f64::INFINITY {
        return 0.0;
    }
    (-log_add_exp(0.0, log_odds)).exp()
}

/// Log Bayes factor of the risk-maximizing Beta(a, b) prior in closed form.
///
/// With `k` the marginal likelihood, the tie contributes `1/2^(n+1)` and the
/// truncated beta part `B(Y+a, n-Y+b)/B(a,b) (1 - F'(1/2)) / (2 (1 - F(1/2)))`,
/// where `F` is the Beta(a, b) cdf and `F'` the posterior Beta(Y+a, n-Y+b) cdf.
pub(crate) fn riskmax_log_terms(n: u64, winners: u64, a: f64, b: f64) -> Result<(f64, f64)> {
    if winners > n {
        return domain(format!("winner count {winners} exceeds sample size {n}"));
    }
    if !(a > 0.0 && b > 0.0) {
        return domain(format!(
            "prior shape parameters must be positive (a={a}, b={b})"
        ));
    }
    let (alpha, beta) = (winners as f64 + a, (n - winners) as f64 + b);
    let tie = -((n + 1) as f64) * LN_2;
    let spread = -LN_2 + ln_beta(alpha, beta) - ln_beta(a, b)
        + ln_reg_inc_beta_upper(0.5, alpha, beta)?
        - ln_reg_inc_beta_upper(0.5, a, b)?;
    Ok((tie, spread))
}

/// Closed-form upset probability `u* = (1/2^(n+1)) / k*` under the
/// risk-maximizing Beta(a, b) prior (binomial likelihood).
pub fn riskmax_upset_closed_form(n: u64, winners: u64, a: f64, b: f64) -> Result<f64> {
    let (tie, spread) = riskmax_log_terms(n, winners, a, b)?;
    Ok((tie - log_add_exp(tie, spread)).exp())
}

/// Closed-form log Bayes factor (equal to the log posterior odds) under the
/// risk-maximizing prior.
pub fn riskmax_log_bayes_factor(n: u64, winners: u64, a: f64, b: f64) -> Result<f64> {
    let (tie, spread) = riskmax_log_terms(n, winners, a, b)?;
    Ok(spread - tie)
}
