//! Statistics against hand values, independent quadrature and product
//! oracles, cross-method identities and monotonicity properties.

mod common;

use common::{rel_diff, simpson};
use pollaudit_core::special::{log_beta_fn, reg_inc_beta};
use pollaudit_core::stats::{
    bayes_factor, bravo_statistic, clip_statistic, kaplan_kolmogorov, kaplan_markov, kaplan_wald,
    kmart_with_replacement, kmart_without_replacement, log_bayes_factor, log_bravo,
    log_kaplan_wald_with_replacement, log_kmart_with_replacement, log_posterior_odds,
    maxbravo_statistic, riskmax_upset_closed_form, upset_probability, CountStatistic,
};
use pollaudit_core::{
    BallotSample, MethodSpec, PriorSpec, SampleCounts, SamplingScheme, StatisticForm, WeightFn,
};
use proptest::prelude::*;

fn seq(bits: &[u8]) -> BallotSample {
    BallotSample::from_bits(bits).unwrap()
}

fn counts(n: u64, winners: u64) -> SampleCounts {
    SampleCounts { n, winners }
}

fn wr() -> SamplingScheme {
    SamplingScheme::with_replacement()
}

#[test]
fn log_beta_against_quadrature() {
    assert_eq!(log_beta_fn(1.0, 1.0).unwrap(), 0.0);
    assert!((log_beta_fn(2.0, 1.0).unwrap() - 0.5f64.ln()).abs() < 1e-15);
    let oracle = simpson(|x| x.powf(1.5) * (1.0 - x).powf(2.5), 0.0, 1.0, 500_000);
    assert!(rel_diff(log_beta_fn(2.5, 3.5).unwrap().exp(), oracle) < 1e-10);
}

#[test]
fn incomplete_beta_against_quadrature() {
    assert!((reg_inc_beta(0.5, 1.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
    assert!((reg_inc_beta(0.5, 2.0, 1.0).unwrap() - 0.25).abs() < 1e-15);
    let f = |x: f64| x.powf(3.2) * (1.0 - x).powf(1.7);
    // substitute x = 1 - u^2 near the upper endpoint to keep Simpson accurate
    let whole = simpson(f, 0.0, 0.5, 200_000)
        + simpson(|u| 2.0 * u * f(1.0 - u * u), 0.0, 0.5f64.sqrt(), 200_000);
    let part = simpson(f, 0.0, 0.3, 200_000);
    assert!(rel_diff(reg_inc_beta(0.3, 4.2, 2.7).unwrap(), part / whole) < 1e-10);
    assert!(reg_inc_beta(1.5, 1.0, 1.0).is_err());
}

#[test]
fn sequence_probability_hand_values() {
    use pollaudit_core::stats::log_sequence_probability;
    use pollaudit_core::TrueTally;
    let lp = log_sequence_probability(counts(3, 2), &wr(), &TrueTally::share(0.5)).unwrap();
    assert!((lp - (1.0f64 / 8.0).ln()).abs() < 1e-15);
    let wor = SamplingScheme::without_replacement(4);
    let lp = log_sequence_probability(counts(2, 1), &wor, &TrueTally::count(2, 4)).unwrap();
    assert!((lp - (1.0f64 / 3.0).ln()).abs() < 1e-15);
    // an ordered draw (1,1,1,0,0) from 6 winners among 10, by hand
    let wor = SamplingScheme::without_replacement(10);
    let direct: f64 = (6.0 / 10.0) * (5.0 / 9.0) * (4.0 / 8.0) * (4.0 / 7.0) * (3.0 / 6.0);
    let lp = log_sequence_probability(counts(5, 3), &wor, &TrueTally::count(6, 10)).unwrap();
    assert!(rel_diff(lp.exp(), direct) < 1e-14);
}

#[test]
fn bayes_factor_hand_values() {
    let one = seq(&[1]);
    let bf = bayes_factor(&one, &PriorSpec::uniform(), &wr()).unwrap();
    assert!((bf - 3.0).abs() < 1e-12, "{bf}");
    for prior in [
        PriorSpec::uniform(),
        PriorSpec::Beta { a: 100.0, b: 100.0 },
        PriorSpec::RiskMaximizing { a: 1.0, b: 1.0 },
    ] {
        assert!(
            (bayes_factor(&BallotSample::default(), &prior, &wr()).unwrap() - 1.0).abs() < 1e-12
        );
    }
}

#[test]
fn beta_binomial_bayes_factor_against_direct_sum() {
    let total = 10u64;
    let wor = SamplingScheme::without_replacement(total);
    let sample = seq(&[1, 0, 1, 1]);
    // uniform prior over T = 0..10; ordered likelihood T(T-1)(T-2)(10-T) / 10^(4)
    let lik = |t: u64| -> f64 {
        if !(3..=9).contains(&t) {
            return 0.0;
        }
        let t = t as f64;
        t * (t - 1.0) * (t - 2.0) * (10.0 - t)
    };
    let above: f64 = (6..=10).map(lik).sum();
    let below: f64 = (0..=5).map(lik).sum();
    let oracle = (above / below) / (5.0 / 6.0);
    let prior = PriorSpec::BetaBinomial {
        total_ballots: total,
        a: 1.0,
        b: 1.0,
    };
    assert!(rel_diff(bayes_factor(&sample, &prior, &wor).unwrap(), oracle) < 1e-12);
    // a Beta prior on the share induces the same prior on the tally
    assert!(
        rel_diff(
            bayes_factor(&sample, &PriorSpec::uniform(), &wor).unwrap(),
            oracle
        ) < 1e-12
    );
}

#[test]
fn beta_binomial_non_uniform_against_direct_sum() {
    // BetaBinomial(12, 2.5, 0.7) prior, n = 5, Y = 2
    let (total, a, b) = (12u64, 2.5f64, 0.7f64);
    let ln_gamma_ratio = |x: f64, k: u64| -> f64 { (0..k).map(|i| (x + i as f64).ln()).sum() };
    let prior = |t: u64| -> f64 {
        // C(N,T) B(T+a, N-T+b) / B(a,b) = C(N,T) (a)_T (b)_{N-T} / (a+b)_N
        let choose: f64 = (0..t)
            .map(|i| ((total - i) as f64 / (i + 1) as f64).ln())
            .sum();
        (choose + ln_gamma_ratio(a, t) + ln_gamma_ratio(b, total - t)
            - ln_gamma_ratio(a + b, total))
        .exp()
    };
    let lik = |t: u64| -> f64 {
        let (y, l) = (2u64, 3u64);
        if t < y || total - t < l {
            return 0.0;
        }
        (0..y).map(|i| (t - i) as f64).product::<f64>()
            * (0..l).map(|i| (total - t - i) as f64).product::<f64>()
    };
    let (mut h1, mut h0, mut p1, mut p0) = (0.0, 0.0, 0.0, 0.0);
    for t in 0..=total {
        if 2 * t > total {
            h1 += prior(t) * lik(t);
            p1 += prior(t);
        } else {
            h0 += prior(t) * lik(t);
            p0 += prior(t);
        }
    }
    let spec = PriorSpec::BetaBinomial {
        total_ballots: total,
        a,
        b,
    };
    let got = log_bayes_factor(
        counts(5, 2),
        &spec,
        StatisticForm::WithoutReplacement,
        Some(total),
    )
    .unwrap();
    assert!(rel_diff(got.exp(), (h1 / h0) / (p1 / p0)) < 1e-12);
    let post = log_posterior_odds(
        counts(5, 2),
        &spec,
        StatisticForm::WithoutReplacement,
        Some(total),
    )
    .unwrap();
    assert!(rel_diff(post.exp(), h1 / h0) < 1e-12);
}

#[test]
fn upset_probability_hand_values_and_quadrature() {
    let rm = |a, b| PriorSpec::RiskMaximizing { a, b };
    assert!(
        (upset_probability(&BallotSample::default(), &rm(1.0, 1.0), &wr()).unwrap() - 0.5).abs()
            < 1e-14
    );
    assert!((upset_probability(&seq(&[1]), &rm(1.0, 1.0), &wr()).unwrap() - 0.4).abs() < 1e-14);
    assert!((riskmax_upset_closed_form(1, 1, 1.0, 1.0).unwrap() - 0.4).abs() < 1e-14);
    assert!((riskmax_upset_closed_form(0, 0, 3.0, 7.0).unwrap() - 0.5).abs() < 1e-14);
    // n = 50, Y = 30, risk-maximizing(2, 2): half the mass at 1/2, half on Beta(2,2) truncated above 1/2
    let mut bits = vec![1u8; 30];
    bits.extend(vec![0u8; 20]);
    let sample = seq(&bits);
    let lik = |p: f64| p.powi(30) * (1.0 - p).powi(20);
    let above = simpson(|p| lik(p) * 6.0 * p * (1.0 - p) / 0.5, 0.5, 1.0, 20_000);
    let oracle = lik(0.5) / (lik(0.5) + above);
    let got = upset_probability(&sample, &rm(2.0, 2.0), &wr()).unwrap();
    assert!(rel_diff(got, oracle) < 1e-9, "{got} vs {oracle}");
    assert!(rel_diff(riskmax_upset_closed_form(50, 30, 2.0, 2.0).unwrap(), oracle) < 1e-9);
}

#[test]
fn kmart_with_replacement_hand_values() {
    let g = WeightFn::Uniform;
    assert!((kmart_with_replacement(&seq(&[1]), &g, 0.5).unwrap() - 1.5).abs() < 1e-14);
    assert!((kmart_with_replacement(&seq(&[1, 0]), &g, 0.5).unwrap() - 2.0 / 3.0).abs() < 1e-14);
    // general t by quadrature of the product: t = 0.4, three winners and a loser
    let t = 0.4;
    let oracle = simpson(
        |x| (x * (1.0 / t - 1.0) + 1.0).powi(3) * (1.0 - x),
        0.0,
        1.0,
        1000,
    );
    assert!(
        rel_diff(
            kmart_with_replacement(&seq(&[1, 1, 0, 1]), &g, t).unwrap(),
            oracle
        ) < 1e-12
    );
}

#[test]
fn kmart_without_replacement_hand_values() {
    assert!((kmart_without_replacement(&seq(&[1]), 4, 0.5).unwrap() - 1.5).abs() < 1e-14);
    assert!((kmart_without_replacement(&seq(&[1, 0]), 4, 0.5).unwrap() - 2.0 / 3.0).abs() < 1e-14);
    assert!((kmart_without_replacement(&seq(&[0, 1]), 4, 0.5).unwrap() - 7.0 / 12.0).abs() < 1e-14);
}

/// The KMart integrand for sampling without replacement at a fixed `γ`.
fn kmart_integrand(bits: &[u8], total: u64, t: f64, gamma: f64) -> f64 {
    let nf = total as f64;
    let mut y = 0.0;
    let mut prod = 1.0;
    for (i, &b) in bits.iter().enumerate() {
        let x = b as f64;
        let factor = x * ((nf - i as f64) / nf) / (t - y / nf);
        prod *= gamma * (factor - 1.0) + 1.0;
        y += x;
    }
    prod
}

/// Kaplan–Kolmogorov as a direct product of its per-draw factors.
fn kolmogorov_product(bits: &[u8], total: u64, gamma: f64, t: f64) -> f64 {
    let nf = total as f64;
    let mut y = 0.0;
    let mut prod = 1.0;
    for (i, &b) in bits.iter().enumerate() {
        let x = b as f64;
        let left = (nf - i as f64) / nf;
        prod *= (x + gamma) * left / (t - y / nf + left * gamma);
        y += x;
    }
    prod
}

#[test]
fn kaplan_hand_values() {
    assert!((kaplan_markov(&seq(&[1]), 0.5, 0.5).unwrap() - 1.5).abs() < 1e-14);
    assert!((kaplan_markov(&seq(&[1, 0]), 0.5, 0.5).unwrap() - 0.75).abs() < 1e-14);
    assert!((kaplan_markov(&seq(&[1, 1, 0, 1, 0]), 1e9, 0.5).unwrap() - 1.0).abs() < 1e-6);
    assert!((kaplan_wald(&seq(&[1]), 0.1, &wr()).unwrap() - 1.1).abs() < 1e-14);
    assert!((kaplan_wald(&seq(&[1, 0, 1]), 0.2, &wr()).unwrap() - 1.152).abs() < 1e-13);
    let wor = SamplingScheme::without_replacement(10);
    let got = kaplan_wald(&seq(&[1, 0, 1]), 0.5, &wor).unwrap();
    assert!(rel_diff(got, kmart_integrand(&[1, 0, 1], 10, 0.5, 0.5)) < 1e-14);
    assert!((kaplan_kolmogorov(&seq(&[1]), 10, 0.1, 0.5).unwrap() - 11.0 / 6.0).abs() < 1e-14);
    assert!((kaplan_kolmogorov(&seq(&[0]), 10, 0.1, 0.5).unwrap() - 1.0 / 6.0).abs() < 1e-14);
    let bits = [1, 1, 0, 1, 0, 0, 1, 1];
    let got = kaplan_kolmogorov(&seq(&bits), 20, 0.3, 0.5).unwrap();
    assert!(rel_diff(got, kolmogorov_product(&bits, 20, 0.3, 0.5)) < 1e-13);
}

#[test]
fn clip_and_maxbravo_hand_values() {
    assert_eq!(clip_statistic(&seq(&[1, 0, 1, 0])).unwrap(), 0.0);
    assert_eq!(clip_statistic(&seq(&[1, 1, 0, 1])).unwrap(), 1.0);
    let mut bits = vec![1u8; 60];
    bits.extend(vec![0u8; 40]);
    assert!((clip_statistic(&seq(&bits)).unwrap() - 2.0).abs() < 1e-14);
    assert!(clip_statistic(&BallotSample::default()).is_err());
    assert!((maxbravo_statistic(&seq(&[1, 1])).unwrap() - 4.0).abs() < 1e-14);
    assert_eq!(maxbravo_statistic(&seq(&[1, 0])).unwrap(), 1.0);
    assert!((maxbravo_statistic(&seq(&[1, 1, 0, 1])).unwrap() - 1.6875).abs() < 1e-14);
    assert!((bravo_statistic(&seq(&[1]), 0.55, &wr()).unwrap() - 1.1).abs() < 1e-14);
    assert!((bravo_statistic(&seq(&[0]), 0.55, &wr()).unwrap() - 0.9).abs() < 1e-14);
}

#[test]
fn bravo_without_replacement_is_a_likelihood_ratio() {
    use pollaudit_core::stats::log_sequence_probability;
    use pollaudit_core::TrueTally;
    let wor = SamplingScheme::without_replacement(20);
    // T1 = round(0.6 * 20) = 12 against T0 = 10
    let c = counts(6, 4);
    let num = log_sequence_probability(c, &wor, &TrueTally::count(12, 20)).unwrap();
    let den = log_sequence_probability(c, &wor, &TrueTally::count(10, 20)).unwrap();
    let got = log_bravo(c, 0.6, StatisticForm::WithoutReplacement, Some(20)).unwrap();
    assert!((got - (num - den)).abs() < 1e-13);
}

#[test]
fn kmart_equals_riskmax_bayes_factor() {
    let rm = PriorSpec::RiskMaximizing { a: 1.0, b: 1.0 };
    for n in 0..=200u64 {
        for y in 0..=n {
            let k = log_kmart_with_replacement(counts(n, y), &WeightFn::Uniform, 0.5).unwrap();
            let bf =
                log_bayes_factor(counts(n, y), &rm, StatisticForm::WithReplacement, None).unwrap();
            assert!((k - bf).abs() < 1e-9, "n={n} Y={y}: {k} vs {bf}");
            let closed = riskmax_upset_closed_form(n, y, 1.0, 1.0).unwrap();
            let via = 1.0 / (1.0 + k.exp());
            assert!(
                rel_diff(closed, via) < 1e-9,
                "n={n} Y={y}: {closed} vs {via}"
            );
        }
    }
}

#[test]
fn kaplan_wald_equals_bravo() {
    for gamma in [0.02, 0.1, 0.4, 1.0] {
        let p1 = (gamma + 1.0) / 2.0;
        for n in 0..=100u64 {
            for y in 0..=n {
                let kw = log_kaplan_wald_with_replacement(counts(n, y), gamma, 0.5).unwrap();
                let b = log_bravo(counts(n, y), p1, StatisticForm::WithReplacement, None).unwrap();
                // relative to the size of the log-likelihood terms, which cancel near Y = n/2
                let scale = y as f64 * (1.0 + gamma).ln() - (n - y) as f64 * (1.0 - gamma).ln();
                assert!(
                    kw == b || (kw - b).abs() <= 1e-12 * scale,
                    "γ={gamma} n={n} Y={y}: {kw} vs {b}"
                );
            }
        }
    }
}

#[test]
fn point_pair_bayes_factor_equals_bravo() {
    for p1 in [0.51, 0.55, 0.7, 0.9] {
        let prior = PriorSpec::symmetric_point_pair(p1);
        for n in 0..=100u64 {
            for y in 0..=n {
                let bf =
                    log_bayes_factor(counts(n, y), &prior, StatisticForm::WithReplacement, None)
                        .unwrap();
                let b = log_bravo(counts(n, y), p1, StatisticForm::WithReplacement, None).unwrap();
                assert!(
                    (bf - b).abs() <= 1e-12 * b.abs().max(1.0),
                    "p1={p1} n={n} Y={y}: {bf} vs {b}"
                );
            }
        }
    }
}

#[test]
fn count_statistics_are_monotone_in_winners() {
    let methods = [
        MethodSpec::bayesian_beta(1.0, 1.0),
        MethodSpec::bayesian_beta(100.0, 100.0),
        MethodSpec::risk_max(1.0, 1.0),
        MethodSpec::risk_max(2.0, 5.0),
        MethodSpec::bravo(0.55),
        MethodSpec::max_bravo(),
        MethodSpec::clip_audit(),
        MethodSpec::kmart(),
        MethodSpec::kaplan_markov(0.3),
    ];
    for method in methods {
        let stat = CountStatistic::new(&method, &wr()).unwrap();
        for n in 1..=200u64 {
            let mut prev = f64::NEG_INFINITY;
            for y in 0..=n {
                let s = stat.score(n, y).unwrap();
                assert!(s >= prev, "{} decreases at n={n} Y={y}", method.label());
                prev = s;
            }
        }
    }
}

#[test]
fn upset_probability_is_consistent_with_posterior_odds() {
    let priors = [
        PriorSpec::uniform(),
        PriorSpec::Beta { a: 3.0, b: 1.5 },
        PriorSpec::RiskMaximizing { a: 1.0, b: 2.0 },
    ];
    for prior in priors {
        for (n, y) in [(0u64, 0u64), (5, 3), (40, 18), (120, 70)] {
            let mut bits = vec![1u8; y as usize];
            bits.extend(vec![0u8; (n - y) as usize]);
            let upset = upset_probability(&seq(&bits), &prior, &wr()).unwrap();
            let odds =
                log_posterior_odds(counts(n, y), &prior, StatisticForm::WithReplacement, None)
                    .unwrap();
            assert!((upset - 1.0 / (1.0 + odds.exp())).abs() < 1e-12);
        }
    }
}

fn bits_strategy(max_len: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..=1, 1..=max_len)
}

proptest! {
    #[test]
    fn kmart_without_replacement_matches_quadrature(bits in bits_strategy(10)) {
        let total = 50;
        let y: u64 = bits.iter().map(|&b| b as u64).sum();
        prop_assume!(2 * y <= total);
        let got = kmart_without_replacement(&seq(&bits), total, 0.5).unwrap();
        let oracle = simpson(|g| kmart_integrand(&bits, total, 0.5, g), 0.0, 1.0, 2000);
        prop_assert!(rel_diff(got, oracle) < 1e-10, "{} vs {}", got, oracle);
    }

    #[test]
    fn kaplan_kolmogorov_matches_product(bits in bits_strategy(16), gamma in 0.01f64..2.0, total in 40u64..200) {
        let got = kaplan_kolmogorov(&seq(&bits), total, gamma, 0.5).unwrap();
        prop_assert!(rel_diff(got, kolmogorov_product(&bits, total, gamma, 0.5)) < 1e-12);
    }

    #[test]
    fn kmart_with_replacement_depends_on_counts_only(mut bits in bits_strategy(40), seed in any::<u64>()) {
        let before = kmart_with_replacement(&seq(&bits), &WeightFn::Uniform, 0.5).unwrap();
        // a deterministic shuffle driven by the seed
        let len = bits.len();
        let mut s = seed;
        for i in (1..len).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            bits.swap(i, (s >> 33) as usize % (i + 1));
        }
        let after = kmart_with_replacement(&seq(&bits), &WeightFn::Uniform, 0.5).unwrap();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn bravo_without_replacement_is_monotone(total in 10u64..400, p1 in 0.51f64..0.95, frac in 0.05f64..1.0) {
        let n = ((total as f64 * frac) as u64).max(1);
        let mut prev = f64::NEG_INFINITY;
        for y in 0..=n {
            let s = log_bravo(counts(n, y), p1, StatisticForm::WithoutReplacement, Some(total)).unwrap();
            prop_assert!(s >= prev, "N={} n={} Y={}", total, n, y);
            prev = s;
        }
    }

    #[test]
    fn beta_binomial_bayes_factor_is_monotone(total in 4u64..300, a in 0.3f64..50.0, b in 0.3f64..50.0, frac in 0.05f64..1.0) {
        let n = ((total as f64 * frac) as u64).max(1);
        let prior = PriorSpec::BetaBinomial { total_ballots: total, a, b };
        let mut prev = f64::NEG_INFINITY;
        for y in 0..=n {
            let s = log_bayes_factor(counts(n, y), &prior, StatisticForm::WithoutReplacement, Some(total)).unwrap();
            prop_assert!(s == prev || s >= prev - 1e-9 * prev.abs().max(1.0), "N={} n={} Y={}: {} < {}", total, n, y, s, prev);
            prev = prev.max(s);
        }
    }

    #[test]
    fn clip_is_antisymmetric(n in 1u64..5000, frac in 0.0f64..=1.0) {
        let y = (n as f64 * frac) as u64;
        let stat = CountStatistic::new(&MethodSpec::clip_audit(), &wr()).unwrap();
        prop_assert_eq!(stat.score(n, y).unwrap(), -stat.score(n, n - y).unwrap());
    }
}
