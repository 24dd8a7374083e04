//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use std::collections::BTreeMap;

use pollaudit_core::engine::StoppingRule;
use pollaudit_core::stats::CountStatistic;
use pollaudit_core::{MethodSpec, SamplingScheme, ScoreScale};

/// The methods benchmarked in the results table.
pub fn table_methods() -> Vec<MethodSpec> {
    vec![
        MethodSpec::bayesian_beta(1.0, 1.0),
        MethodSpec::bayesian_beta(100.0, 100.0),
        MethodSpec::bayesian_beta(500.0, 500.0),
        MethodSpec::risk_max(1.0, 1.0),
        MethodSpec::bravo(0.7),
        MethodSpec::bravo(0.55),
        MethodSpec::bravo(0.51),
        MethodSpec::max_bravo(),
        MethodSpec::clip_audit(),
    ]
}

/// How one ordered draw sequence ends.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PathEnd {
    Certify(u64),
    Escalate(u64),
    FullCount,
}

/// Stopping distribution obtained by enumerating every ordered sequence.
#[derive(Clone, Debug, Default)]
pub struct Enumerated {
    pub stop_pmf: BTreeMap<u64, f64>,
    pub escalate_pmf: BTreeMap<u64, f64>,
    pub full_count: f64,
    pub mean_sample_size: f64,
}

impl Enumerated {
    pub fn power(&self) -> f64 {
        self.stop_pmf.values().sum()
    }
}

/// Score of every `(n, Y)` with `n <= m`, straight from the statistic.
pub fn score_table(method: &MethodSpec, scheme: &SamplingScheme, m: u64) -> Vec<Vec<f64>> {
    let stat = CountStatistic::new(method, scheme).unwrap();
    (0..=m)
        .map(|n| {
            (0..=n)
                .map(|y| {
                    if n == 0 {
                        f64::NAN
                    } else {
                        stat.score(n, y).unwrap()
                    }
                })
                .collect()
        })
        .collect()
}

/// Applies the stopping rule by hand along one path of draws.
pub fn path_end(
    path: u64,
    len: u64,
    scores: &[Vec<f64>],
    rule: &StoppingRule,
    scale: ScoreScale,
    proven_min: Option<u64>,
) -> PathEnd {
    let upper = scale.to_score(rule.upper);
    let lower = rule.lower.map(|l| scale.to_score(l));
    let checks = rule.check_points();
    let mut y = 0;
    for i in 0..len {
        let n = i + 1;
        y += (path >> i) & 1;
        if proven_min.is_some_and(|k| y >= k) {
            return PathEnd::Certify(n);
        }
        if n >= rule.min_sample && checks.contains(&n) {
            let s = scores[n as usize][y as usize];
            if s > upper {
                return PathEnd::Certify(n);
            }
            if lower.is_some_and(|l| s < l) {
                return PathEnd::Escalate(n);
            }
        }
    }
    PathEnd::FullCount
}

/// Probability of one ordered sequence of `len` draws (bit `i` set means a
/// winner at draw `i + 1`): an urn of `winners` out of `total`, or
/// independent draws with winner probability `share`.
pub fn path_probability(path: u64, len: u64, winners: u64, total: Option<u64>, share: f64) -> f64 {
    let mut prob = 1.0;
    let mut y = 0u64;
    for i in 0..len {
        let winner = (path >> i) & 1 == 1;
        prob *= match total {
            Some(total) => {
                let left = (total - i) as f64;
                if winner {
                    (winners as f64 - y as f64).max(0.0) / left
                } else {
                    ((total - winners) as f64 - (i - y) as f64).max(0.0) / left
                }
            }
            None => {
                if winner {
                    share
                } else {
                    1.0 - share
                }
            }
        };
        y += winner as u64;
    }
    prob
}

/// Enumerates all `2^m` draw sequences, stopping each by hand.
pub fn enumerate(
    method: &MethodSpec,
    rule: &StoppingRule,
    scheme: &SamplingScheme,
    winners: u64,
    share: f64,
) -> Enumerated {
    let m = rule.max_sample;
    assert!(m <= 20, "enumeration oracle is exponential in m");
    let scores = score_table(method, scheme, m);
    let proven_min = scheme
        .total_ballots
        .filter(|_| scheme.is_without_replacement())
        .map(|n| n / 2 + 1);
    let mut out = Enumerated::default();
    // a path that stops early is weighted by the full-length probability; its
    // continuations sum back to the probability of the stopped prefix
    for path in 0..(1u64 << m) {
        let p = path_probability(
            path,
            m,
            winners,
            scheme
                .total_ballots
                .filter(|_| scheme.is_without_replacement()),
            share,
        );
        if p == 0.0 {
            continue;
        }
        match path_end(path, m, &scores, rule, method.score_scale(), proven_min) {
            PathEnd::Certify(n) => {
                *out.stop_pmf.entry(n).or_default() += p;
                out.mean_sample_size += n as f64 * p;
            }
            PathEnd::Escalate(n) => {
                *out.escalate_pmf.entry(n).or_default() += p;
                out.mean_sample_size += n as f64 * p;
            }
            PathEnd::FullCount => {
                out.full_count += p;
                out.mean_sample_size += m as f64 * p;
            }
        }
    }
    out
}

/// Probability of certifying by the end of a round of `r` more draws from
/// state `(n0, y0)`, with the rule applied only at the round end (proven
/// wins certify at once). Sampling without replacement.
pub fn enumerate_round(
    method: &MethodSpec,
    rule: &StoppingRule,
    scheme: &SamplingScheme,
    winners: u64,
    state: (u64, u64),
    r: u64,
) -> f64 {
    let (n0, y0) = state;
    let total = scheme.total_ballots.unwrap();
    let end = (n0 + r).min(rule.max_sample);
    let stat = CountStatistic::new(method, scheme).unwrap();
    let upper = method.score_scale().to_score(rule.upper);
    let proven_min = total / 2 + 1;
    let len = end - n0;
    let mut certified = 0.0;
    for path in 0..(1u64 << len) {
        let mut prob = 1.0;
        let mut y = y0;
        let mut proven = y0 >= proven_min;
        for i in 0..len {
            let n = n0 + i;
            let left = (total - n) as f64;
            let winner = (path >> i) & 1 == 1;
            prob *= if winner {
                (winners as f64 - y as f64).max(0.0) / left
            } else {
                ((total - winners) as f64 - (n - y) as f64).max(0.0) / left
            };
            y += winner as u64;
            proven |= y >= proven_min;
        }
        if proven || (end >= rule.min_sample && stat.score(end, y).unwrap() > upper) {
            certified += prob;
        }
    }
    certified
}

/// Simpson's rule on `[a, b]` with `2k` panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, k: usize) -> f64 {
    let n = 2 * k;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

/// Relative difference, treating two tiny values as equal.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
