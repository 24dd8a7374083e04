//! Audit method specifications.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, AuditError, Result};
use crate::prior::{PriorSpec, WeightFn};
use crate::sample::{SamplingScheme, StatisticForm};

/// Which statistic to compute and how it is tuned.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    #[serde(flatten)]
    pub kind: MethodKind,
    /// Likelihood form override; defaults per method (see [`MethodSpec::form`]).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub form: Option<StatisticForm>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MethodKind {
    Bayesian {
        prior: PriorSpec,
    },
    Bravo {
        p1: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reported_share: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        epsilon: Option<f64>,
    },
    MaxBravo,
    ClipAudit,
    Kmart {
        #[serde(default)]
        weight: WeightFn,
        #[serde(default = "half")]
        t: f64,
    },
    KaplanWald {
        gamma: f64,
        #[serde(default = "half")]
        t: f64,
    },
    KaplanMarkov {
        gamma: f64,
        #[serde(default = "half")]
        t: f64,
    },
    KaplanKolmogorov {
        gamma: f64,
        #[serde(default = "half")]
        t: f64,
    },
}

fn half() -> f64 {
    0.5
}

/// Scale on which a statistic is compared with its threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreScale {
    /// Nonnegative ratio statistic compared through its natural log.
    Log,
    /// Raw real-valued statistic (ClipAudit).
    Raw,
}

impl ScoreScale {
    /// Maps a threshold on the statistic's natural scale to the score scale.
    pub fn to_score(self, threshold: f64) -> f64 {
        match self {
            ScoreScale::Log => threshold.ln(),
            ScoreScale::Raw => threshold,
        }
    }

    pub fn from_score(self, score: f64) -> f64 {
        match self {
            ScoreScale::Log => score.exp(),
            ScoreScale::Raw => score,
        }
    }
}

/// How a calibrated threshold is reported.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NominalScale {
    /// `α = 1/h`.
    RiskLimit,
    /// `υ = 1/(h+1)`.
    UpsetProbability,
    /// The raw threshold itself.
    RawThreshold,
}

impl NominalScale {
    pub fn nominal(self, threshold: f64) -> f64 {
        match self {
            NominalScale::RiskLimit => 1.0 / threshold,
            NominalScale::UpsetProbability => 1.0 / (threshold + 1.0),
            NominalScale::RawThreshold => threshold,
        }
    }
}

impl MethodSpec {
    pub fn new(kind: MethodKind) -> Self {
        Self { kind, form: None }
    }

    pub fn with_form(mut self, form: StatisticForm) -> Self {
        self.form = Some(form);
        self
    }

    pub fn bayesian(prior: PriorSpec) -> Self {
        Self::new(MethodKind::Bayesian { prior })
    }

    pub fn bayesian_beta(a: f64, b: f64) -> Self {
        Self::bayesian(PriorSpec::Beta { a, b })
    }

    pub fn risk_max(a: f64, b: f64) -> Self {
        Self::bayesian(PriorSpec::RiskMaximizing { a, b })
    }

    pub fn bravo(p1: f64) -> Self {
        Self::new(MethodKind::Bravo {
            p1,
            reported_share: None,
            epsilon: None,
        })
    }

    /// BRAVO with `p1 = p_r - ε`.
    pub fn bravo_from_reported(reported_share: f64, epsilon: f64) -> Self {
        Self::new(MethodKind::Bravo {
            p1: reported_share - epsilon,
            reported_share: Some(reported_share),
            epsilon: Some(epsilon),
        })
    }

    pub fn max_bravo() -> Self {
        Self::new(MethodKind::MaxBravo)
    }

    pub fn clip_audit() -> Self {
        Self::new(MethodKind::ClipAudit)
    }

    pub fn kmart() -> Self {
        Self::new(MethodKind::Kmart {
            weight: WeightFn::Uniform,
            t: 0.5,
        })
    }

    pub fn kaplan_wald(gamma: f64) -> Self {
        Self::new(MethodKind::KaplanWald { gamma, t: 0.5 })
    }

    pub fn kaplan_markov(gamma: f64) -> Self {
        Self::new(MethodKind::KaplanMarkov { gamma, t: 0.5 })
    }

    pub fn kaplan_kolmogorov(gamma: f64) -> Self {
        Self::new(MethodKind::KaplanKolmogorov { gamma, t: 0.5 })
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |t: f64, what: &str| -> Result<()> {
            if t > 0.0 && t < 1.0 {
                Ok(())
            } else {
                invalid(format!("{what} must lie in (0, 1) (got {t})"))
            }
        };
        match &self.kind {
            MethodKind::Bayesian { prior } => prior.validate(),
            MethodKind::Bravo {
                p1,
                reported_share,
                epsilon,
            } => {
                if !(*p1 > 0.5 && *p1 <= 1.0) {
                    return invalid(format!("BRAVO requires 0.5 < p1 <= 1 (got p1={p1})"));
                }
                if let (Some(pr), Some(eps)) = (reported_share, epsilon) {
                    if ((pr - eps) - p1).abs() > 1e-12 {
                        return invalid(format!(
                            "BRAVO p1={p1} does not equal p_r - ε = {}",
                            pr - eps
                        ));
                    }
                }
                Ok(())
            }
            MethodKind::MaxBravo | MethodKind::ClipAudit => Ok(()),
            MethodKind::Kmart { weight, t } => {
                unit(*t, "t")?;
                weight.validate()
            }
            MethodKind::KaplanWald { gamma, t } => {
                unit(*t, "t")?;
                if *gamma > 0.0 && *gamma <= 1.0 {
                    Ok(())
                } else {
                    invalid(format!("Kaplan-Wald requires 0 < gamma <= 1 (got {gamma})"))
                }
            }
            MethodKind::KaplanMarkov { gamma, t } | MethodKind::KaplanKolmogorov { gamma, t } => {
                unit(*t, "t")?;
                if *gamma > 0.0 && gamma.is_finite() {
                    Ok(())
                } else {
                    invalid(format!("gamma must be positive (got {gamma})"))
                }
            }
        }
    }

    /// The likelihood form this method uses under `scheme`.
    ///
    /// MaxBRAVO, ClipAudit, Kaplan–Markov and the risk-maximizing Bayesian
    /// audit default to the binomial form whatever the sampling; the others
    /// follow the sampling scheme. Kaplan–Kolmogorov is inherently
    /// without-replacement.
    pub fn form(&self, scheme: &SamplingScheme) -> StatisticForm {
        if let Some(form) = self.form {
            return form;
        }
        match &self.kind {
            MethodKind::MaxBravo | MethodKind::ClipAudit | MethodKind::KaplanMarkov { .. } => {
                StatisticForm::WithReplacement
            }
            MethodKind::Bayesian {
                prior: PriorSpec::RiskMaximizing { .. },
            }
            | MethodKind::Bayesian {
                prior: PriorSpec::WeightedKmart { .. },
            } => StatisticForm::WithReplacement,
            MethodKind::KaplanKolmogorov { .. } => StatisticForm::WithoutReplacement,
            _ => scheme.mode.into(),
        }
    }

    /// True when the statistic depends on the order of the draws, so that it
    /// cannot be evaluated from `(n, Y)` alone.
    pub fn is_order_dependent(&self, scheme: &SamplingScheme) -> bool {
        let without = self.form(scheme) == StatisticForm::WithoutReplacement;
        match self.kind {
            MethodKind::KaplanKolmogorov { .. } => true,
            MethodKind::Kmart { .. } | MethodKind::KaplanWald { .. } => without,
            _ => false,
        }
    }

    /// Null mean `t`: the share of votes the null hypothesis allows the winner.
    pub fn null_mean(&self) -> f64 {
        match self.kind {
            MethodKind::Kmart { t, .. }
            | MethodKind::KaplanWald { t, .. }
            | MethodKind::KaplanMarkov { t, .. }
            | MethodKind::KaplanKolmogorov { t, .. } => t,
            _ => 0.5,
        }
    }

    pub fn score_scale(&self) -> ScoreScale {
        match self.kind {
            MethodKind::ClipAudit => ScoreScale::Raw,
            _ => ScoreScale::Log,
        }
    }

    pub fn nominal_scale(&self) -> NominalScale {
        match self.kind {
            MethodKind::Bayesian { .. } => NominalScale::UpsetProbability,
            MethodKind::ClipAudit => NominalScale::RawThreshold,
            _ => NominalScale::RiskLimit,
        }
    }

    /// The threshold that makes an automatically risk-limiting method have
    /// risk limit `alpha`; `None` for methods that must be calibrated.
    pub fn automatic_threshold(&self, alpha: f64) -> Option<f64> {
        match &self.kind {
            MethodKind::Bravo { .. }
            | MethodKind::Kmart { .. }
            | MethodKind::KaplanWald { .. }
            | MethodKind::KaplanMarkov { .. }
            | MethodKind::KaplanKolmogorov { .. } => Some(1.0 / alpha),
            MethodKind::Bayesian {
                prior: PriorSpec::RiskMaximizing { .. },
            } => Some(1.0 / alpha),
            MethodKind::Bayesian {
                prior:
                    PriorSpec::PointPair {
                        p0,
                        weight0,
                        weight1,
                        ..
                    },
            } if *p0 == 0.5 && weight0 == weight1 => Some(1.0 / alpha),
            _ => None,
        }
    }

    /// Human-readable label, in the style of a results table row.
    pub fn label(&self) -> String {
        match &self.kind {
            MethodKind::Bayesian {
                prior: PriorSpec::RiskMaximizing { a, b },
            } => {
                if a == b {
                    format!("Bayesian (r.m.), a = b = {a}")
                } else {
                    format!("Bayesian (r.m.), a = {a}, b = {b}")
                }
            }
            MethodKind::Bayesian { prior } => format!("Bayesian, {}", prior.label()),
            MethodKind::Bravo { p1, .. } => format!("BRAVO, p1 = {p1}"),
            MethodKind::MaxBravo => "MaxBRAVO".to_string(),
            MethodKind::ClipAudit => "ClipAudit".to_string(),
            MethodKind::Kmart { weight, .. } if weight.is_uniform() => "KMart".to_string(),
            MethodKind::Kmart { weight, .. } => format!("KMart, g = {weight}"),
            MethodKind::KaplanWald { gamma, .. } => format!("Kaplan-Wald, gamma = {gamma}"),
            MethodKind::KaplanMarkov { gamma, .. } => format!("Kaplan-Markov, gamma = {gamma}"),
            MethodKind::KaplanKolmogorov { gamma, .. } => {
                format!("Kaplan-Kolmogorov, gamma = {gamma}")
            }
        }
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Parses compact method strings such as `bravo:p1=0.55`,
/// `bayesian:a=1,b=1`, `riskmax:a=1,b=1`, `point-pair:p1=0.6`, `maxbravo`,
/// `clip`, `kmart`, `kaplan-wald:gamma=0.1`, `kaplan-markov:gamma=0.1`,
/// `kaplan-kolmogorov:gamma=0.1`. Any method accepts
/// `form=with-replacement|without-replacement`.
impl FromStr for MethodSpec {
    type Err = AuditError;

    fn from_str(s: &str) -> Result<Self> {
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut params: Vec<(String, String)> = Vec::new();
        for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| {
                AuditError::InvalidConfig(format!(
                    "expected key=value in method parameter '{part}'"
                ))
            })?;
            params.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut form = None;
        let mut take = |key: &str| -> Option<String> {
            params
                .iter()
                .position(|(k, _)| k == key)
                .map(|i| params.remove(i).1)
        };
        if let Some(f) = take("form") {
            form = Some(match f.as_str() {
                "with-replacement" | "binomial" => StatisticForm::WithReplacement,
                "without-replacement" | "hypergeometric" => StatisticForm::WithoutReplacement,
                other => return invalid(format!("unknown statistic form '{other}'")),
            });
        }
        let num = |v: Option<String>, key: &str, default: Option<f64>| -> Result<f64> {
            match v {
                Some(v) => v.parse::<f64>().map_err(|_| {
                    AuditError::InvalidConfig(format!("parameter {key}='{v}' is not a number"))
                }),
                None => default.ok_or_else(|| {
                    AuditError::InvalidConfig(format!("method '{name}' needs parameter {key}"))
                }),
            }
        };
        let kind = match name.trim().to_ascii_lowercase().as_str() {
            "bayesian" | "bayes" => {
                let a = num(take("a"), "a", Some(1.0))?;
                let b = num(take("b"), "b", Some(1.0))?;
                match take("n") {
                    Some(total) => {
                        let total_ballots = total.parse().map_err(|_| {
                            AuditError::InvalidConfig(format!("n='{total}' is not a count"))
                        })?;
                        MethodKind::Bayesian {
                            prior: PriorSpec::BetaBinomial {
                                total_ballots,
                                a,
                                b,
                            },
                        }
                    }
                    None => MethodKind::Bayesian {
                        prior: PriorSpec::Beta { a, b },
                    },
                }
            }
            "riskmax" | "risk-max" | "bayesian-risk-max" => MethodKind::Bayesian {
                prior: PriorSpec::RiskMaximizing {
                    a: num(take("a"), "a", Some(1.0))?,
                    b: num(take("b"), "b", Some(1.0))?,
                },
            },
            "point-pair" => {
                let p0 = num(take("p0"), "p0", Some(0.5))?;
                let p1 = num(take("p1"), "p1", None)?;
                let weight1 = num(take("w1"), "w1", Some(0.5))?;
                MethodKind::Bayesian {
                    prior: PriorSpec::PointPair {
                        p0,
                        p1,
                        weight0: 1.0 - weight1,
                        weight1,
                    },
                }
            }
            "bravo" => {
                let reported = take("pr");
                let eps = take("eps");
                match (reported, eps) {
                    (Some(pr), Some(eps)) => {
                        let pr = num(Some(pr), "pr", None)?;
                        let eps = num(Some(eps), "eps", None)?;
                        MethodKind::Bravo {
                            p1: pr - eps,
                            reported_share: Some(pr),
                            epsilon: Some(eps),
                        }
                    }
                    _ => MethodKind::Bravo {
                        p1: num(take("p1"), "p1", None)?,
                        reported_share: None,
                        epsilon: None,
                    },
                }
            }
            "maxbravo" | "max-bravo" => MethodKind::MaxBravo,
            "clip" | "clipaudit" | "clip-audit" => MethodKind::ClipAudit,
            "kmart" => MethodKind::Kmart {
                weight: WeightFn::Uniform,
                t: num(take("t"), "t", Some(0.5))?,
            },
            "kaplan-wald" => MethodKind::KaplanWald {
                gamma: num(take("gamma"), "gamma", None)?,
                t: num(take("t"), "t", Some(0.5))?,
            },
            "kaplan-markov" => MethodKind::KaplanMarkov {
                gamma: num(take("gamma"), "gamma", None)?,
                t: num(take("t"), "t", Some(0.5))?,
            },
            "kaplan-kolmogorov" => MethodKind::KaplanKolmogorov {
                gamma: num(take("gamma"), "gamma", None)?,
                t: num(take("t"), "t", Some(0.5))?,
            },
            other => return invalid(format!("unknown method '{other}'")),
        };
        if let Some((k, _)) = params.first() {
            return invalid(format!("method '{name}' does not take parameter '{k}'"));
        }
        let spec = MethodSpec { kind, form };
        spec.validate()?;
        Ok(spec)
    }
}
