//! Audit statistics.
//!
//! Ratio statistics are handled as natural logs: `+∞` marks a sample that
//! proves the reported winner won, `-∞` a statistic of exactly zero.

pub mod bayes;
pub mod clip;
pub mod kmart;
pub mod likelihood;
pub mod sprt;

pub use bayes::{
    bayes_factor, beta_binomial_log_tails, log_bayes_factor, log_posterior_odds, log_prior_odds,
    riskmax_log_bayes_factor, riskmax_upset_closed_form, upset_from_log_odds, upset_probability,
};
pub use clip::{clip_boundary, clip_statistic, clip_value};
pub use kmart::{
    kaplan_kolmogorov, kaplan_markov, kmart_with_replacement, kmart_without_replacement,
    log_kaplan_markov, log_kaplan_wald_with_replacement, log_kmart_with_replacement, KaplanProduct,
    KaplanVariant, KmartProduct,
};
pub use likelihood::{ln_binomial_sequence, ln_hypergeometric_sequence, log_sequence_probability};
pub use sprt::{
    bravo_statistic, log_bravo, log_max_bravo, log_point_pair_ratio, maxbravo_statistic,
};

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::method::{MethodKind, MethodSpec, ScoreScale};
use crate::prior::{PriorSpec, WeightFn};
use crate::sample::{BallotSample, SampleCounts, SamplingScheme, StatisticForm};

/// Kaplan–Wald statistic; with replacement it is a function of `(n, Y)`,
/// without replacement it depends on the order of the draws.
pub fn kaplan_wald(sample: &BallotSample, gamma: f64, scheme: &SamplingScheme) -> Result<f64> {
    scheme.validate()?;
    scheme.check_sample_size(sample.len())?;
    if scheme.is_without_replacement() {
        let mut acc = KaplanProduct::new(
            KaplanVariant::Wald,
            scheme.require_total("Kaplan-Wald")?,
            gamma,
            0.5,
        )?;
        for &x in sample.draws() {
            acc.push(x)?;
        }
        Ok(acc.log_value().exp())
    } else {
        Ok(log_kaplan_wald_with_replacement(sample.counts(), gamma, 0.5)?.exp())
    }
}

#[derive(Clone, Debug)]
enum CountKind {
    Bayes {
        prior: PriorSpec,
        log_prior_odds: f64,
    },
    RiskMax {
        a: f64,
        b: f64,
    },
    Bravo {
        p1: f64,
    },
    MaxBravo,
    Clip,
    Kmart {
        weight: WeightFn,
        t: f64,
    },
    KaplanWald {
        gamma: f64,
        t: f64,
    },
    KaplanMarkov {
        gamma: f64,
        t: f64,
    },
}

/// A statistic that depends on the sample only through `(n, Y)`.
///
/// [`CountStatistic::score`] returns the value compared against the
/// threshold on the method's [`ScoreScale`]: the log of ratio statistics
/// (Bayesian audits use the log Bayes factor) or ClipAudit's raw value.
#[derive(Clone, Debug)]
pub struct CountStatistic {
    kind: CountKind,
    form: StatisticForm,
    total: Option<u64>,
    scale: ScoreScale,
}

impl CountStatistic {
    pub fn new(method: &MethodSpec, scheme: &SamplingScheme) -> Result<Self> {
        method.validate()?;
        scheme.validate()?;
        if method.is_order_dependent(scheme) {
            return Err(AuditError::Unsupported(format!(
                "{} depends on the order of the draws; it has no (n, Y) form",
                method.label()
            )));
        }
        let form = method.form(scheme);
        let total = scheme.total_ballots;
        if form == StatisticForm::WithoutReplacement && total.is_none() {
            return Err(AuditError::InvalidConfig(format!(
                "{} requires total_ballots",
                method.label()
            )));
        }
        let kind = match &method.kind {
            MethodKind::Bayesian {
                prior: PriorSpec::RiskMaximizing { a, b },
            } => {
                if form == StatisticForm::WithoutReplacement {
                    return Err(AuditError::Unsupported(
                        "the risk-maximizing prior is defined with the binomial likelihood only"
                            .into(),
                    ));
                }
                CountKind::RiskMax { a: *a, b: *b }
            }
            MethodKind::Bayesian { prior } => {
                let log_prior_odds = log_prior_odds(prior, form, total)?;
                if !log_prior_odds.is_finite() {
                    return Err(AuditError::InvalidConfig(format!(
                        "prior {} puts no mass on one hypothesis",
                        prior.label()
                    )));
                }
                CountKind::Bayes {
                    prior: prior.clone(),
                    log_prior_odds,
                }
            }
            MethodKind::Bravo { p1, .. } => CountKind::Bravo { p1: *p1 },
            MethodKind::MaxBravo => CountKind::MaxBravo,
            MethodKind::ClipAudit => CountKind::Clip,
            MethodKind::Kmart { weight, t } => CountKind::Kmart {
                weight: weight.clone(),
                t: *t,
            },
            MethodKind::KaplanWald { gamma, t } => CountKind::KaplanWald {
                gamma: *gamma,
                t: *t,
            },
            MethodKind::KaplanMarkov { gamma, t } => CountKind::KaplanMarkov {
                gamma: *gamma,
                t: *t,
            },
            MethodKind::KaplanKolmogorov { .. } => {
                unreachable!("order-dependent methods rejected above")
            }
        };
        Ok(Self {
            kind,
            form,
            total,
            scale: method.score_scale(),
        })
    }

    pub fn scale(&self) -> ScoreScale {
        self.scale
    }

    pub fn form(&self) -> StatisticForm {
        self.form
    }

    /// Statistic at sample size `n` with `winners` winner ballots, on the
    /// score scale. NaN is reported as an error.
    pub fn score(&self, n: u64, winners: u64) -> Result<f64> {
        let counts = SampleCounts { n, winners };
        let value = match &self.kind {
            CountKind::Bayes {
                prior,
                log_prior_odds,
            } => log_posterior_odds(counts, prior, self.form, self.total)? - log_prior_odds,
            CountKind::RiskMax { a, b } => riskmax_log_bayes_factor(n, winners, *a, *b)?,
            CountKind::Bravo { p1 } => log_bravo(counts, *p1, self.form, self.total)?,
            CountKind::MaxBravo => log_max_bravo(counts, self.form, self.total)?,
            CountKind::Clip => clip_value(counts)?,
            CountKind::Kmart { weight, t } => log_kmart_with_replacement(counts, weight, *t)?,
            CountKind::KaplanWald { gamma, t } => {
                log_kaplan_wald_with_replacement(counts, *gamma, *t)?
            }
            CountKind::KaplanMarkov { gamma, t } => log_kaplan_markov(counts, *gamma, *t)?,
        };
        if value.is_nan() {
            return Err(AuditError::NotANumber { n, winners });
        }
        Ok(value)
    }
}

/// Running statistic for a sequence of draws, for both order-independent and
/// order-dependent methods.
#[derive(Clone, Debug)]
pub enum SequentialStatistic {
    Counts {
        stat: CountStatistic,
        counts: SampleCounts,
    },
    Kmart(KmartProduct),
    Kaplan(KaplanProduct),
}

/// Serializable snapshot of the order-dependent accumulator, if any.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AccumulatorState {
    Counts { n: u64, winners: u64 },
    Kmart(KmartProduct),
    Kaplan(KaplanProduct),
}

impl SequentialStatistic {
    pub fn new(method: &MethodSpec, scheme: &SamplingScheme) -> Result<Self> {
        method.validate()?;
        scheme.validate()?;
        if !method.is_order_dependent(scheme) {
            let stat = CountStatistic::new(method, scheme)?;
            return Ok(SequentialStatistic::Counts {
                stat,
                counts: SampleCounts { n: 0, winners: 0 },
            });
        }
        let total = scheme.require_total(&method.label())?;
        Ok(match &method.kind {
            MethodKind::Kmart { weight, t } => {
                if !weight.is_uniform() {
                    return Err(AuditError::Unsupported(
                        "without replacement KMart supports the uniform weight only".into(),
                    ));
                }
                SequentialStatistic::Kmart(KmartProduct::new(total, *t)?)
            }
            MethodKind::KaplanWald { gamma, t } => SequentialStatistic::Kaplan(KaplanProduct::new(
                KaplanVariant::Wald,
                total,
                *gamma,
                *t,
            )?),
            MethodKind::KaplanKolmogorov { gamma, t } => SequentialStatistic::Kaplan(
                KaplanProduct::new(KaplanVariant::Kolmogorov, total, *gamma, *t)?,
            ),
            _ => unreachable!("only KMart and the Kaplan statistics are order-dependent"),
        })
    }

    pub fn push(&mut self, winner: bool) -> Result<()> {
        match self {
            SequentialStatistic::Counts { counts, .. } => {
                counts.n += 1;
                counts.winners += winner as u64;
                Ok(())
            }
            SequentialStatistic::Kmart(acc) => acc.push(winner),
            SequentialStatistic::Kaplan(acc) => acc.push(winner),
        }
    }

    pub fn counts(&self) -> SampleCounts {
        match self {
            SequentialStatistic::Counts { counts, .. } => *counts,
            SequentialStatistic::Kmart(acc) => acc.counts(),
            SequentialStatistic::Kaplan(acc) => acc.counts(),
        }
    }

    /// Current statistic on the score scale.
    pub fn score(&self) -> Result<f64> {
        let value = match self {
            SequentialStatistic::Counts { stat, counts } => {
                return stat.score(counts.n, counts.winners)
            }
            SequentialStatistic::Kmart(acc) => acc.log_value(),
            SequentialStatistic::Kaplan(acc) => acc.log_value(),
        };
        if value.is_nan() {
            let c = self.counts();
            return Err(AuditError::NotANumber {
                n: c.n,
                winners: c.winners,
            });
        }
        Ok(value)
    }

    pub fn snapshot(&self) -> AccumulatorState {
        match self {
            SequentialStatistic::Counts { counts, .. } => AccumulatorState::Counts {
                n: counts.n,
                winners: counts.winners,
            },
            SequentialStatistic::Kmart(acc) => AccumulatorState::Kmart(acc.clone()),
            SequentialStatistic::Kaplan(acc) => AccumulatorState::Kaplan(acc.clone()),
        }
    }
}
