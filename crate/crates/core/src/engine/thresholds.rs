//! Correspondences between SPRT error rates and Bayesian audit thresholds.

use crate::error::{domain, Result};

/// Thresholds `(h, l)` for upset-probability limit `υ`, full-count limit `φ`
/// and prior odds `Pr(H0)/Pr(H1)`, to be compared with the Bayes factor.
/// `l = 0` when `φ = 1` (no lower threshold).
pub fn bayes_thresholds(
    upset_limit: f64,
    full_count_limit: f64,
    prior_odds: f64,
) -> Result<(f64, f64)> {
    let (u, phi) = (upset_limit, full_count_limit);
    if !(u > 0.0 && u < phi && phi <= 1.0) {
        return domain(format!("need 0 < υ < φ <= 1 (got υ={u}, φ={phi})"));
    }
    if !(prior_odds > 0.0 && prior_odds.is_finite()) {
        return domain(format!("prior odds must be positive (got {prior_odds})"));
    }
    Ok(((1.0 - u) / u * prior_odds, (1.0 - phi) / phi * prior_odds))
}

/// `(υ, φ)` equivalent to an SPRT with type I error `α` and type II error `β`.
pub fn sprt_to_bayes(alpha: f64, beta: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha < 1.0) || !(0.0..1.0).contains(&beta) {
        return domain(format!(
            "need 0 < α < 1 and 0 <= β < 1 (got α={alpha}, β={beta})"
        ));
    }
    // from (1-β)/α = (1-υ)/υ and β/(1-α) = (1-φ)/φ
    Ok((
        alpha / (1.0 - beta + alpha),
        (1.0 - alpha) / (1.0 - alpha + beta),
    ))
}

/// `(α, β)` equivalent to a Bayesian audit with limits `υ` and `φ`.
pub fn bayes_to_sprt(upset_limit: f64, full_count_limit: f64) -> Result<(f64, f64)> {
    let (u, phi) = (upset_limit, full_count_limit);
    if !(u > 0.0 && u < 0.5 && u < phi && phi <= 1.0) {
        return domain(format!(
            "need 0 < υ < 1/2 and υ < φ <= 1 (got υ={u}, φ={phi})"
        ));
    }
    let d = phi - u;
    Ok((u * (2.0 * phi - 1.0) / d, (1.0 - phi) * (1.0 - 2.0 * u) / d))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-14
    }

    #[test]
    fn bayes_threshold_examples() {
        let (h, l) = bayes_thresholds(0.05, 1.0, 1.0).unwrap();
        assert!(close(h, 19.0) && l == 0.0);
        let (h, l) = bayes_thresholds(0.05, 0.95, 1.0).unwrap();
        assert!(close(h, 19.0) && close(l, 1.0 / 19.0));
        let alpha = 0.05;
        let (h, _) = bayes_thresholds(alpha / (1.0 + alpha), 1.0, 1.0).unwrap();
        assert!(close(h, 20.0));
        assert!(bayes_thresholds(0.5, 0.4, 1.0).is_err());
    }

    #[test]
    fn sprt_examples() {
        let (u, phi) = sprt_to_bayes(0.05, 0.05).unwrap();
        assert!(close(u, 0.05) && close(phi, 0.95));
        let (u, _) = sprt_to_bayes(0.05, 0.0).unwrap();
        assert!(close(u, 1.0 / 21.0));
        let (u, phi) = sprt_to_bayes(0.1, 0.2).unwrap();
        assert!(close(u, 1.0 / 9.0) && close(phi, 9.0 / 11.0));
        let (a, b) = bayes_to_sprt(u, phi).unwrap();
        assert!(close(a, 0.1) && close(b, 0.2));
    }

    #[test]
    fn bayes_to_sprt_examples() {
        let (a, b) = bayes_to_sprt(0.05, 0.95).unwrap();
        assert!(close(a, 0.05) && close(b, 0.05));
        let (a, b) = bayes_to_sprt(0.05, 1.0).unwrap();
        assert!(close(a, 1.0 / 19.0) && b == 0.0);
        let (a, _) = bayes_to_sprt(0.05, 0.9).unwrap();
        assert!(close(a, 0.05 * 0.8 / 0.85) && a < 0.05);
        assert!(bayes_to_sprt(0.05, 0.05).is_err());
    }
}
