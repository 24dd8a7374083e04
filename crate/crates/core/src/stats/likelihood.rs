//! Probabilities of ordered ballot sequences.

use crate::error::{invalid, Result};
use crate::sample::{SampleCounts, SamplingMode, SamplingScheme, TrueTally};
use crate::special::{ln_falling, xlogy};

/// `ln[p^Y (1-p)^(n-Y)]`, the probability of one ordered sequence drawn with replacement.
pub fn ln_binomial_sequence(n: u64, winners: u64, p: f64) -> f64 {
    xlogy(winners as f64, p) + xlogy((n - winners) as f64, 1.0 - p)
}

/// `ln[T^(Y) (N-T)^(n-Y)]`: the hypergeometric sequence probability without
/// its `N^(n)` normalizer, which cancels in likelihood ratios.
pub(crate) fn ln_hyper_numerator(n: u64, winners: u64, tally: u64, total: u64) -> f64 {
    ln_falling(tally, winners) + ln_falling(total - tally, n - winners)
}

/// `ln[T^(Y) (N-T)^(n-Y) / N^(n)]`, the probability of one ordered sequence
/// drawn without replacement; negative infinity when the sequence is impossible.
pub fn ln_hypergeometric_sequence(n: u64, winners: u64, tally: u64, total: u64) -> f64 {
    if n > total {
        return f64::NEG_INFINITY;
    }
    ln_hyper_numerator(n, winners, tally, total) - ln_falling(total, n)
}

/// Log-probability of drawing a particular ordered sample with the given
/// counts, under `scheme` and the true `tally`.
pub fn log_sequence_probability(
    counts: SampleCounts,
    scheme: &SamplingScheme,
    tally: &TrueTally,
) -> Result<f64> {
    scheme.validate()?;
    if counts.winners > counts.n {
        return invalid(format!(
            "winner count {} exceeds sample size {}",
            counts.winners, counts.n
        ));
    }
    match (scheme.mode, tally.for_scheme(scheme)?) {
        (SamplingMode::WithoutReplacement, TrueTally::Count { winners, total }) => Ok(
            ln_hypergeometric_sequence(counts.n, counts.winners, winners, total),
        ),
        (_, t) => Ok(ln_binomial_sequence(
            counts.n,
            counts.winners,
            t.share_value(),
        )),
    }
}
