//! Threshold calibration: the most permissive threshold whose maximum risk
//! stays within a target limit.

use serde::{Deserialize, Serialize};

use crate::engine::{Schedule, StoppingRule};
use crate::error::{invalid, AuditError, Result};
use crate::exact::{
    boundary_with_cache, forward_dp_with_boundary, max_risk, worst_case_tally, ScoreCache,
};
use crate::method::{MethodKind, MethodSpec, NominalScale, ScoreScale};
use crate::prior::PriorSpec;
use crate::sample::SamplingScheme;
use crate::stats::log_prior_odds;

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
const MAX_ITERATIONS: u32 = 60;
const MAX_EXPANSIONS: u32 = 12;

/// Outcome of a calibration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub method: MethodSpec,
    pub rule: StoppingRule,
    pub total_ballots: Option<u64>,
    pub max_sample: u64,
    pub schedule: Schedule,
    pub min_sample: u64,
    pub alpha: f64,
    /// Calibrated threshold on the statistic's natural scale.
    pub raw_h: f64,
    pub nominal_scale: NominalScale,
    /// The threshold on the nominal scale (risk limit, upset probability or raw).
    pub nominal: f64,
    pub achieved_risk: f64,
    /// True when even the lowest threshold searched (`h = 1`, or `c = 0` for
    /// ClipAudit) meets the limit; the rule is then less permissive than allowed.
    pub at_bracket_floor: bool,
    pub iterations: u32,
}

/// Result of checking a rule against a risk limit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskCheck {
    pub ok: bool,
    pub achieved_risk: f64,
}

/// Maximum risk of `rule` compared with `alpha`.
pub fn verify_risk_limit(
    rule: &StoppingRule,
    method: &MethodSpec,
    scheme: &SamplingScheme,
    alpha: f64,
) -> Result<RiskCheck> {
    let achieved_risk = max_risk(method, rule, scheme)?;
    Ok(RiskCheck {
        ok: achieved_risk <= alpha,
        achieved_risk,
    })
}

/// The threshold `h` expressed on the method's nominal scale. For Bayesian
/// audits this is the upset-probability limit `υ` solving
/// `h = ((1-υ)/υ) Pr(H0)/Pr(H1)`.
pub fn nominal_threshold(method: &MethodSpec, scheme: &SamplingScheme, h: f64) -> Result<f64> {
    let scale = method.nominal_scale();
    if let MethodKind::Bayesian { prior } = &method.kind {
        if !matches!(prior, PriorSpec::RiskMaximizing { .. }) {
            let lpo = log_prior_odds(prior, method.form(scheme), scheme.total_ballots)?;
            return Ok(1.0 / (1.0 + h * lpo.exp()));
        }
    }
    Ok(scale.nominal(h))
}

struct RiskFn<'a> {
    cache: ScoreCache,
    method: &'a MethodSpec,
    template: &'a StoppingRule,
    scheme: &'a SamplingScheme,
    scale: ScoreScale,
    evaluations: u32,
}

impl RiskFn<'_> {
    fn rule_at(&self, x: f64) -> StoppingRule {
        self.template.with_upper(self.scale.from_score(x))
    }

    fn risk(&mut self, x: f64) -> Result<f64> {
        self.evaluations += 1;
        let rule = self.rule_at(x);
        let boundary = boundary_with_cache(&mut self.cache, self.method, &rule, self.scheme)?;
        Ok(forward_dp_with_boundary(
            &boundary,
            &rule,
            self.scheme,
            &worst_case_tally(self.scheme)?,
        )?
        .power)
    }
}

/// Calibrates the upper threshold of `template` so the maximum risk is at
/// most `alpha`, as permissively as possible.
///
/// Bisects on `ln h` over `[ln 1, ln 10^6]` (ClipAudit: on `c` over
/// `[0, 10]`), widening the top of the bracket if needed, and stops after 60
/// iterations or once the achieved risk is within `tolerance` below `alpha`.
/// The calibrated rule is re-verified with an independent risk evaluation.
pub fn calibrate(
    method: &MethodSpec,
    template: &StoppingRule,
    scheme: &SamplingScheme,
    alpha: f64,
    tolerance: f64,
) -> Result<Calibration> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("risk limit must lie in (0, 1) (got {alpha})"));
    }
    if !(tolerance >= 0.0) {
        return invalid(format!("tolerance must be nonnegative (got {tolerance})"));
    }
    let scale = method.score_scale();
    let probe = template.with_upper(scale.from_score(1.0));
    probe.validate(scale, scheme)?;
    let mut f = RiskFn {
        cache: ScoreCache::new(method, scheme)?,
        method,
        template: &probe,
        scheme,
        scale,
        evaluations: 0,
    };
    let (floor, initial_top, widen) = match scale {
        ScoreScale::Log => (0.0, 1e6f64.ln(), 1e3f64.ln()),
        ScoreScale::Raw => (0.0, 10.0, 10.0),
    };

    let floor_risk = f.risk(floor)?;
    let (x, risk, at_floor) = if floor_risk <= alpha {
        (floor, floor_risk, true)
    } else {
        let (mut lo, mut r_lo) = (floor, floor_risk);
        let mut hi = initial_top;
        let mut r_hi = f.risk(hi)?;
        let mut expansions = 0;
        while r_hi > alpha {
            if r_hi > r_lo {
                return Err(not_monotone(lo, r_lo, hi, r_hi));
            }
            if expansions == MAX_EXPANSIONS {
                return Err(AuditError::CalibrationInfeasible(format!(
                    "{} cannot reach risk {alpha} within {} draws (risk {r_hi} at threshold {})",
                    method.label(),
                    template.max_sample,
                    scale.from_score(hi)
                )));
            }
            lo = hi;
            r_lo = r_hi;
            hi += widen;
            r_hi = f.risk(hi)?;
            expansions += 1;
        }
        for _ in 0..MAX_ITERATIONS {
            if alpha - r_hi <= tolerance || hi - lo <= 1e-15 * hi.abs().max(1.0) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let r_mid = f.risk(mid)?;
            if r_mid > r_lo + 1e-15 || r_mid + 1e-15 < r_hi {
                return Err(not_monotone(lo, r_lo, mid, r_mid));
            }
            if r_mid > alpha {
                lo = mid;
                r_lo = r_mid;
            } else {
                hi = mid;
                r_hi = r_mid;
            }
        }
        (hi, r_hi, false)
    };

    let mut rule = f.rule_at(x);
    // independent re-check of the calibrated rule, nudging up past any rounding in exp/ln
    let mut achieved = max_risk(method, &rule, scheme)?;
    let mut nudges = 0;
    while achieved > alpha {
        if nudges == 8 {
            return Err(AuditError::CalibrationInfeasible(format!(
                "calibrated rule fails re-verification (risk {achieved} > {alpha})"
            )));
        }
        rule.upper = next_up(rule.upper);
        achieved = max_risk(method, &rule, scheme)?;
        nudges += 1;
    }
    debug_assert!(nudges > 0 || (achieved - risk).abs() < 1e-12);
    Ok(Calibration {
        method: method.clone(),
        total_ballots: scheme.total_ballots,
        max_sample: rule.max_sample,
        schedule: rule.schedule.clone(),
        min_sample: rule.min_sample,
        alpha,
        raw_h: rule.upper,
        nominal_scale: method.nominal_scale(),
        nominal: nominal_threshold(method, scheme, rule.upper)?,
        achieved_risk: achieved,
        at_bracket_floor: at_floor,
        iterations: f.evaluations,
        rule,
    })
}

fn next_up(x: f64) -> f64 {
    let step = x.abs().max(f64::MIN_POSITIVE) * 4.0 * f64::EPSILON;
    x + step
}

fn not_monotone(x0: f64, r0: f64, x1: f64, r1: f64) -> AuditError {
    AuditError::CalibrationInfeasible(format!(
        "maximum risk is not monotone in the threshold: risk {r0} at score {x0}, {r1} at score {x1}"
    ))
}
