//! Reference values for the main benchmark: N = 20000 ballots, at most 2000
//! draws without replacement, a decision after every draw and risk limit 5%.

use pollaudit_core::MethodSpec;

pub const TOTAL_BALLOTS: u64 = 20_000;
pub const MAX_SAMPLE: u64 = 2_000;
pub const RISK_LIMIT: f64 = 0.05;
pub const SHARES: [f64; 5] = [0.52, 0.55, 0.60, 0.64, 0.70];

/// Maximum risk (%) of rules using the textbook threshold 1/α.
pub fn uncalibrated_risk_pct() -> Vec<(MethodSpec, f64)> {
    vec![
        (MethodSpec::bravo(0.7), 4.3),
        (MethodSpec::bravo(0.55), 4.7),
        (MethodSpec::bravo(0.51), 0.029),
        (MethodSpec::risk_max(1.0, 1.0), 3.7),
    ]
}

/// Nominal threshold (%) after calibrating to a 5% maximum risk.
pub fn calibrated_nominal_pct() -> Vec<(MethodSpec, f64)> {
    vec![
        (MethodSpec::bayesian_beta(1.0, 1.0), 0.2),
        (MethodSpec::bayesian_beta(100.0, 100.0), 1.2),
        (MethodSpec::bravo(0.55), 5.3),
        (MethodSpec::risk_max(1.0, 1.0), 6.1),
        (MethodSpec::max_bravo(), 1.6),
        (MethodSpec::clip_audit(), 4.7),
    ]
}

/// Mean sample sizes of calibrated rules at each of [`SHARES`].
pub fn calibrated_mean_sample_sizes() -> Vec<(MethodSpec, [f64; 5])> {
    vec![
        (
            MethodSpec::bayesian_beta(1.0, 1.0),
            [1623.0, 637.0, 172.0, 90.0, 46.0],
        ),
        (MethodSpec::bravo(0.55), [1549.0, 562.0, 196.0, 129.0, 85.0]),
        (MethodSpec::clip_audit(), [1630.0, 639.0, 169.0, 89.0, 45.0]),
    ]
}

/// Power (%) of calibrated Bayes(1, 1) at the first three of [`SHARES`].
pub const BAYES_UNIFORM_POWER_PCT: [f64; 3] = [35.0, 99.0, 100.0];

/// With a minimum sample of 300: calibrated Bayes(1, 1) nominal (%).
pub const MIN300_BAYES_UNIFORM_NOMINAL_PCT: f64 = 0.6;
/// With a minimum sample of 300: calibrated BRAVO p1 = 0.7 mean sample size at p = 0.52.
pub const MIN300_BRAVO_07_MEAN_AT_052: f64 = 1994.0;
