//! KMart and the Kaplan family of martingale statistics.

use std::f64::consts::LN_2;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, AuditError, Result};
use crate::prior::WeightFn;
use crate::sample::{BallotSample, SampleCounts};
use crate::special::{
    integrate_adaptive, ln_beta, ln_choose, ln_reg_inc_beta_upper, log_sum_exp, GaussLegendre,
};

use super::sprt::proven_win;

/// Polynomial degree above which [`KmartProduct`] switches from exact
/// coefficients to values at Gauss–Legendre nodes.
pub const EXACT_DEGREE_LIMIT: usize = 512;
const QUADRATURE_POINTS: usize = 256;

fn gauss_legendre_256() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(QUADRATURE_POINTS))
}

fn check_t(t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        invalid(format!("null mean t must lie in (0, 1) (got {t})"))
    }
}

/// Log of the with-replacement KMart statistic
/// `∫_0^1 g(γ) ∏ (1 + γ (X_i / t - 1)) dγ`.
///
/// For `g ≡ 1` and `t = 1/2` this is `2^(n+1) B(Y+1, n-Y+1) [1 - I_{1/2}(Y+1, n-Y+1)]`;
/// other weights and null means are integrated numerically.
pub fn log_kmart_with_replacement(counts: SampleCounts, weight: &WeightFn, t: f64) -> Result<f64> {
    check_t(t)?;
    let SampleCounts { n, winners } = counts;
    if winners > n {
        return domain(format!("winner count {winners} exceeds sample size {n}"));
    }
    let (y, l) = (winners as f64, (n - winners) as f64);
    if weight.is_uniform() && t == 0.5 {
        return Ok((n + 1) as f64 * LN_2
            + ln_beta(y + 1.0, l + 1.0)
            + ln_reg_inc_beta_upper(0.5, y + 1.0, l + 1.0)?);
    }
    let c = 1.0 / t - 1.0;
    let log_kernel = |g: f64| {
        let up = if y == 0.0 { 0.0 } else { y * (g * c).ln_1p() };
        let down = if l == 0.0 { 0.0 } else { l * (-g).ln_1p() };
        up + down
    };
    // maximizer of the kernel: Y c (1 - γ) = (n - Y)(1 + γ c)
    let peak = if n == 0 {
        0.5
    } else {
        ((y * c - l) / (c * n as f64)).clamp(0.0, 1.0)
    };
    let shift = log_kernel(peak);
    let scale = 1.0 / (n as f64 + 1.0).sqrt();
    let mut breaks = vec![0.0, 1.0];
    for m in [1.0, 3.0, 8.0, 20.0] {
        for g in [peak - m * scale, peak + m * scale] {
            if g > 0.0 && g < 1.0 {
                breaks.push(g);
            }
        }
    }
    breaks.sort_by(f64::total_cmp);
    let value = integrate_adaptive(
        |g| weight.eval(g) * (log_kernel(g) - shift).exp(),
        &breaks,
        1e-12,
    )?;
    if !(value > 0.0) || !value.is_finite() {
        return Err(AuditError::Quadrature(format!(
            "KMart integral evaluated to {value} for weight {weight}"
        )));
    }
    Ok(shift + value.ln())
}

pub fn kmart_with_replacement(sample: &BallotSample, weight: &WeightFn, t: f64) -> Result<f64> {
    Ok(log_kmart_with_replacement(sample.counts(), weight, t)?.exp())
}

/// Log of the Kaplan–Markov statistic `∏ (X_i + γ) / (t + γ)`.
pub fn log_kaplan_markov(counts: SampleCounts, gamma: f64, t: f64) -> Result<f64> {
    check_t(t)?;
    if !(gamma > 0.0) {
        return domain(format!("Kaplan-Markov requires gamma > 0 (got {gamma})"));
    }
    let y = counts.winners as f64;
    let l = (counts.n - counts.winners) as f64;
    let den = (t + gamma).ln();
    Ok(y * ((1.0 + gamma).ln() - den) + l * (gamma.ln() - den))
}

pub fn kaplan_markov(sample: &BallotSample, gamma: f64, t: f64) -> Result<f64> {
    Ok(log_kaplan_markov(sample.counts(), gamma, t)?.exp())
}

/// Log of the with-replacement Kaplan–Wald statistic `∏ (1 + γ (X_i / t - 1))`.
pub fn log_kaplan_wald_with_replacement(counts: SampleCounts, gamma: f64, t: f64) -> Result<f64> {
    check_t(t)?;
    if !(gamma > 0.0 && gamma <= 1.0) {
        return domain(format!("Kaplan-Wald requires 0 < gamma <= 1 (got {gamma})"));
    }
    let y = counts.winners as f64;
    let l = (counts.n - counts.winners) as f64;
    let up = if y == 0.0 {
        0.0
    } else {
        y * (gamma * (1.0 / t - 1.0)).ln_1p()
    };
    let down = if l == 0.0 { 0.0 } else { l * (-gamma).ln_1p() };
    Ok(up + down)
}

/// Running state of the without-replacement KMart statistic.
///
/// The integrand `∏ (1 + γ (X_i c_i - 1))`, with
/// `c_i = (N - i + 1) / (N t - Y_{i-1})`, is kept as a polynomial in `γ` in
/// the Bernstein basis, whose coefficients stay nonnegative so the product
/// can be updated without cancellation. Past [`EXACT_DEGREE_LIMIT`] the
/// polynomial is replaced by its values at 256 Gauss–Legendre nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KmartProduct {
    total: u64,
    t: f64,
    n: u64,
    winners: u64,
    proven: bool,
    repr: KmartRepr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum KmartRepr {
    /// Bernstein coefficients scaled by `exp(log_scale)`.
    Bernstein { coeffs: Vec<f64>, log_scale: f64 },
    /// Log integrand at the Gauss–Legendre nodes.
    Nodes { log_values: Vec<f64> },
}

impl KmartProduct {
    pub fn new(total: u64, t: f64) -> Result<Self> {
        check_t(t)?;
        if total == 0 {
            return invalid("KMart needs at least one ballot");
        }
        Ok(Self {
            total,
            t,
            n: 0,
            winners: 0,
            proven: false,
            repr: KmartRepr::Bernstein {
                coeffs: vec![1.0],
                log_scale: 0.0,
            },
        })
    }

    pub fn counts(&self) -> SampleCounts {
        SampleCounts {
            n: self.n,
            winners: self.winners,
        }
    }

    pub fn is_proven(&self) -> bool {
        self.proven
    }

    /// Current polynomial degree, or `None` once switched to quadrature nodes.
    pub fn exact_degree(&self) -> Option<usize> {
        match &self.repr {
            KmartRepr::Bernstein { coeffs, .. } => Some(coeffs.len() - 1),
            KmartRepr::Nodes { .. } => None,
        }
    }

    pub fn push(&mut self, winner: bool) -> Result<()> {
        if self.n >= self.total {
            return domain(format!(
                "cannot draw more than the {} ballots cast",
                self.total
            ));
        }
        let remaining = (self.total - self.n) as f64;
        let null_remaining = self.total as f64 * self.t - self.winners as f64;
        self.n += 1;
        self.winners += winner as u64;
        if self.proven {
            return Ok(());
        }
        if proven_win(self.winners, self.total, self.t) {
            self.proven = true;
            return Ok(());
        }
        // factor (1 - γ) + γ X c; a loser gives X c = 0 even when the null has no winners left
        let high = if winner {
            remaining / null_remaining
        } else {
            0.0
        };
        if let KmartRepr::Bernstein { coeffs, log_scale } = &self.repr {
            if coeffs.len() > EXACT_DEGREE_LIMIT {
                self.repr = KmartRepr::Nodes {
                    log_values: bernstein_log_values(coeffs, *log_scale),
                };
            }
        }
        match &mut self.repr {
            KmartRepr::Bernstein { coeffs, log_scale } => {
                let d = coeffs.len();
                let mut next = vec![0.0; d + 1];
                for (k, slot) in next.iter_mut().enumerate() {
                    let from_low = if k < d {
                        (d - k) as f64 / d as f64 * coeffs[k]
                    } else {
                        0.0
                    };
                    let from_high = if k > 0 {
                        k as f64 / d as f64 * coeffs[k - 1] * high
                    } else {
                        0.0
                    };
                    *slot = from_low + from_high;
                }
                let max = next.iter().copied().fold(0.0, f64::max);
                if !(max > 0.0) || !max.is_finite() {
                    return domain(format!("KMart integrand degenerated at draw {}", self.n));
                }
                for v in next.iter_mut() {
                    *v /= max;
                }
                *log_scale += max.ln();
                *coeffs = next;
            }
            KmartRepr::Nodes { log_values } => {
                let rule = gauss_legendre_256();
                for (v, &g) in log_values.iter_mut().zip(&rule.nodes) {
                    *v += (g * (high - 1.0)).ln_1p();
                }
            }
        }
        Ok(())
    }

    /// Log of `∫_0^1` of the integrand; `+∞` once a win is proven.
    pub fn log_value(&self) -> f64 {
        if self.proven {
            return f64::INFINITY;
        }
        match &self.repr {
            KmartRepr::Bernstein { coeffs, log_scale } => {
                // each Bernstein basis polynomial of degree d integrates to 1/(d+1)
                let sum: f64 = coeffs.iter().sum();
                log_scale + sum.ln() - (coeffs.len() as f64).ln()
            }
            KmartRepr::Nodes { log_values } => {
                let rule = gauss_legendre_256();
                let terms: Vec<f64> = log_values
                    .iter()
                    .zip(&rule.weights)
                    .map(|(v, w)| v + w.ln())
                    .collect();
                log_sum_exp(&terms)
            }
        }
    }
}

fn bernstein_log_values(coeffs: &[f64], log_scale: f64) -> Vec<f64> {
    let d = (coeffs.len() - 1) as u64;
    let log_binom: Vec<f64> = (0..=d).map(|k| ln_choose(d, k)).collect();
    gauss_legendre_256()
        .nodes
        .iter()
        .map(|&g| {
            let (lg, lh) = (g.ln(), (-g).ln_1p());
            let terms: Vec<f64> = coeffs
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0.0)
                .map(|(k, &c)| c.ln() + log_binom[k] + k as f64 * lg + (d - k as u64) as f64 * lh)
                .collect();
            log_scale + log_sum_exp(&terms)
        })
        .collect()
}

/// Without-replacement KMart statistic for an ordered sample; `+∞` when the
/// sample proves the winner has more than `N t` votes.
pub fn kmart_without_replacement(sample: &BallotSample, total: u64, t: f64) -> Result<f64> {
    if sample.len() > total {
        return domain(format!(
            "sample of {} draws exceeds the {total} ballots cast",
            sample.len()
        ));
    }
    let mut acc = KmartProduct::new(total, t)?;
    for &x in sample.draws() {
        acc.push(x)?;
    }
    Ok(acc.log_value().exp())
}

/// Which fixed-γ product a [`KaplanProduct`] accumulates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KaplanVariant {
    /// `∏ (1 + γ (X_i c_i - 1))` with the without-replacement null mean.
    Wald,
    /// `∏ (X_i + γ)((N-i+1)/N) / (t - Y_{i-1}/N + ((N-i+1)/N) γ)`.
    Kolmogorov,
}

/// Running log of an order-dependent Kaplan statistic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KaplanProduct {
    variant: KaplanVariant,
    total: u64,
    gamma: f64,
    t: f64,
    n: u64,
    winners: u64,
    log_value: f64,
}

impl KaplanProduct {
    pub fn new(variant: KaplanVariant, total: u64, gamma: f64, t: f64) -> Result<Self> {
        check_t(t)?;
        if total == 0 {
            return invalid("statistic needs at least one ballot");
        }
        let ok = match variant {
            KaplanVariant::Wald => gamma > 0.0 && gamma <= 1.0,
            KaplanVariant::Kolmogorov => gamma > 0.0 && gamma.is_finite(),
        };
        if !ok {
            return invalid(format!("gamma {gamma} out of range for Kaplan-{variant:?}"));
        }
        Ok(Self {
            variant,
            total,
            gamma,
            t,
            n: 0,
            winners: 0,
            log_value: 0.0,
        })
    }

    pub fn counts(&self) -> SampleCounts {
        SampleCounts {
            n: self.n,
            winners: self.winners,
        }
    }

    pub fn push(&mut self, winner: bool) -> Result<()> {
        if self.n >= self.total {
            return domain(format!(
                "cannot draw more than the {} ballots cast",
                self.total
            ));
        }
        let total = self.total as f64;
        let remaining = total - self.n as f64;
        let prev_winners = self.winners as f64;
        self.n += 1;
        self.winners += winner as u64;
        if self.log_value == f64::INFINITY {
            return Ok(());
        }
        if proven_win(self.winners, self.total, self.t) {
            self.log_value = f64::INFINITY;
            return Ok(());
        }
        let x = if winner { 1.0 } else { 0.0 };
        let factor = match self.variant {
            KaplanVariant::Wald => {
                let high = if winner {
                    remaining / (total * self.t - prev_winners)
                } else {
                    0.0
                };
                1.0 + self.gamma * (high - 1.0)
            }
            KaplanVariant::Kolmogorov => {
                let frac = remaining / total;
                let den = self.t - prev_winners / total + frac * self.gamma;
                if !(den > 0.0) {
                    return domain(format!(
                        "Kaplan-Kolmogorov denominator {den} is not positive at draw {} (Y={})",
                        self.n, self.winners
                    ));
                }
                (x + self.gamma) * frac / den
            }
        };
        self.log_value += factor.ln();
        Ok(())
    }

    pub fn log_value(&self) -> f64 {
        self.log_value
    }
}

/// Kaplan–Kolmogorov statistic for an ordered sample.
pub fn kaplan_kolmogorov(sample: &BallotSample, total: u64, gamma: f64, t: f64) -> Result<f64> {
    if sample.len() > total {
        return domain(format!(
            "sample of {} draws exceeds the {total} ballots cast",
            sample.len()
        ));
    }
    let mut acc = KaplanProduct::new(KaplanVariant::Kolmogorov, total, gamma, t)?;
    for &x in sample.draws() {
        acc.push(x)?;
    }
    Ok(acc.log_value().exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(bits: &[u8]) -> BallotSample {
        BallotSample::from_bits(bits).unwrap()
    }

    #[test]
    fn kmart_hand_integrals() {
        let u = WeightFn::Uniform;
        assert!(
            (kmart_with_replacement(&BallotSample::from_counts(1, 1), &u, 0.5).unwrap() - 1.5)
                .abs()
                < 1e-14
        );
        assert!(
            (kmart_with_replacement(&BallotSample::from_counts(2, 1), &u, 0.5).unwrap()
                - 2.0 / 3.0)
                .abs()
                < 1e-14
        );
        assert!((kmart_without_replacement(&sample(&[1]), 4, 0.5).unwrap() - 1.5).abs() < 1e-14);
        assert!(
            (kmart_without_replacement(&sample(&[1, 0]), 4, 0.5).unwrap() - 2.0 / 3.0).abs()
                < 1e-14
        );
        assert!(
            (kmart_without_replacement(&sample(&[0, 1]), 4, 0.5).unwrap() - 7.0 / 12.0).abs()
                < 1e-14
        );
    }

    #[test]
    fn kmart_quadrature_path_matches_closed_form() {
        let w = WeightFn::custom("one", |_| 1.0);
        for &(n, y) in &[(0u64, 0u64), (5, 4), (40, 15), (300, 170)] {
            let c = SampleCounts { n, winners: y };
            let closed = log_kmart_with_replacement(c, &WeightFn::Uniform, 0.5).unwrap();
            let quad = log_kmart_with_replacement(c, &w, 0.5).unwrap();
            assert!(
                (closed - quad).abs() < 1e-10 * closed.abs().max(1.0),
                "n={n}: {closed} vs {quad}"
            );
        }
    }

    #[test]
    fn kmart_proven_flag() {
        let v = kmart_without_replacement(&sample(&[1, 1, 1]), 4, 0.5).unwrap();
        assert_eq!(v, f64::INFINITY);
        assert!(kmart_without_replacement(&sample(&[1, 0, 1, 0, 1]), 4, 0.5).is_err());
    }

    #[test]
    fn kmart_node_values_track_the_product() {
        let total = 5000u64;
        let draws: Vec<bool> = (0..EXACT_DEGREE_LIMIT + 40).map(|i| i % 3 != 0).collect();
        let mut acc = KmartProduct::new(total, 0.5).unwrap();
        for (i, &x) in draws.iter().enumerate() {
            acc.push(x).unwrap();
            if i + 1 == EXACT_DEGREE_LIMIT {
                assert_eq!(acc.exact_degree(), Some(EXACT_DEGREE_LIMIT));
            }
        }
        assert!(acc.exact_degree().is_none());
        let log_integrand = |g: f64| {
            let mut winners = 0.0;
            let mut acc = 0.0;
            for (i, &x) in draws.iter().enumerate() {
                let high = if x {
                    (total - i as u64) as f64 / (total as f64 * 0.5 - winners)
                } else {
                    0.0
                };
                acc += (g * (high - 1.0)).ln_1p();
                winners += x as u8 as f64;
            }
            acc
        };
        let shift = (0..=100)
            .map(|i| log_integrand(i as f64 / 100.0))
            .fold(f64::NEG_INFINITY, f64::max);
        let breaks: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let oracle = shift
            + integrate_adaptive(|g| (log_integrand(g) - shift).exp(), &breaks, 1e-12)
                .unwrap()
                .ln();
        assert!(
            (acc.log_value() - oracle).abs() < 1e-9,
            "{} vs {oracle}",
            acc.log_value()
        );
    }

    #[test]
    fn kaplan_kolmogorov_hand_values() {
        assert!(
            (kaplan_kolmogorov(&sample(&[1]), 10, 0.1, 0.5).unwrap() - 11.0 / 6.0).abs() < 1e-14
        );
        assert!(
            (kaplan_kolmogorov(&sample(&[0]), 10, 0.1, 0.5).unwrap() - 1.0 / 6.0).abs() < 1e-14
        );
    }

    #[test]
    fn kaplan_markov_hand_values() {
        let v = |n, y, g| {
            log_kaplan_markov(SampleCounts { n, winners: y }, g, 0.5)
                .unwrap()
                .exp()
        };
        assert!((v(1, 1, 0.5) - 1.5).abs() < 1e-14);
        assert!((v(2, 1, 0.5) - 0.75).abs() < 1e-14);
        assert!((v(7, 3, 1e9) - 1.0).abs() < 1e-6);
    }
}
