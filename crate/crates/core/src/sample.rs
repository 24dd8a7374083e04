//! Ballot samples and sampling schemes.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, AuditError, Result};

/// Ordered interpretations of the ballots drawn so far: `true` is a vote for
/// the reported winner, `false` a vote for the reported loser.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<u8>", into = "Vec<u8>")]
pub struct BallotSample {
    draws: Vec<bool>,
    winners: u64,
}

impl BallotSample {
    pub fn new(draws: Vec<bool>) -> Self {
        let winners = draws.iter().filter(|&&d| d).count() as u64;
        Self { draws, winners }
    }

    /// Builds a sample from 0/1 interpretations, rejecting any other value.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        let mut draws = Vec::with_capacity(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            match b {
                0 => draws.push(false),
                1 => draws.push(true),
                other => {
                    return Err(AuditError::MalformedRound(format!(
                        "interpretation {i} is {other}; expected 0 or 1"
                    )))
                }
            }
        }
        Ok(Self::new(draws))
    }

    /// A sample with `winners` winner ballots followed by the loser ballots.
    /// Useful for statistics that depend only on the counts.
    pub fn from_counts(n: u64, winners: u64) -> Self {
        assert!(winners <= n, "winner count exceeds sample size");
        let mut draws = vec![true; winners as usize];
        draws.resize(n as usize, false);
        Self::new(draws)
    }

    pub fn push(&mut self, winner: bool) {
        self.draws.push(winner);
        self.winners += winner as u64;
    }

    pub fn len(&self) -> u64 {
        self.draws.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Number of sampled ballots for the reported winner (`Y_n`).
    pub fn winners(&self) -> u64 {
        self.winners
    }

    pub fn draws(&self) -> &[bool] {
        &self.draws
    }

    pub fn counts(&self) -> SampleCounts {
        SampleCounts {
            n: self.len(),
            winners: self.winners,
        }
    }
}

impl From<Vec<u8>> for BallotSample {
    fn from(bits: Vec<u8>) -> Self {
        Self::new(bits.into_iter().map(|b| b != 0).collect())
    }
}

impl From<BallotSample> for Vec<u8> {
    fn from(s: BallotSample) -> Self {
        s.draws.into_iter().map(u8::from).collect()
    }
}

/// Sample size and winner count, the sufficient statistic for every
/// order-independent audit statistic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SampleCounts {
    pub n: u64,
    pub winners: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    WithReplacement,
    WithoutReplacement,
}

/// How ballots are drawn, and the number of ballots cast when known.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingScheme {
    pub mode: SamplingMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_ballots: Option<u64>,
}

impl SamplingScheme {
    pub fn with_replacement() -> Self {
        Self {
            mode: SamplingMode::WithReplacement,
            total_ballots: None,
        }
    }

    pub fn without_replacement(total_ballots: u64) -> Self {
        Self {
            mode: SamplingMode::WithoutReplacement,
            total_ballots: Some(total_ballots),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.mode, self.total_ballots) {
            (SamplingMode::WithoutReplacement, None) => {
                invalid("sampling without replacement requires total_ballots")
            }
            (_, Some(0)) => invalid("total_ballots must be at least 1"),
            _ => Ok(()),
        }
    }

    pub fn is_without_replacement(&self) -> bool {
        self.mode == SamplingMode::WithoutReplacement
    }

    /// Total ballots, or an error naming what needed it.
    pub fn require_total(&self, what: &str) -> Result<u64> {
        self.total_ballots
            .ok_or_else(|| AuditError::InvalidConfig(format!("{what} requires total_ballots")))
    }

    pub fn check_sample_size(&self, n: u64) -> Result<()> {
        if let (SamplingMode::WithoutReplacement, Some(total)) = (self.mode, self.total_ballots) {
            if n > total {
                return Err(AuditError::Domain(format!(
                    "sample of {n} draws exceeds the {total} ballots cast"
                )));
            }
        }
        Ok(())
    }
}

/// Which likelihood a statistic uses. A method may use the binomial form
/// even when ballots are drawn without replacement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatisticForm {
    /// Binomial / Bernoulli likelihood.
    WithReplacement,
    /// Hypergeometric likelihood (needs the number of ballots cast).
    WithoutReplacement,
}

impl From<SamplingMode> for StatisticForm {
    fn from(mode: SamplingMode) -> Self {
        match mode {
            SamplingMode::WithReplacement => StatisticForm::WithReplacement,
            SamplingMode::WithoutReplacement => StatisticForm::WithoutReplacement,
        }
    }
}

/// The true tally a probability is evaluated at.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrueTally {
    /// `T` winner ballots among `total` cast (sampling without replacement).
    Count { winners: u64, total: u64 },
    /// Winner share `p_T` (sampling with replacement).
    Share { p: f64 },
}

impl TrueTally {
    pub fn count(winners: u64, total: u64) -> Self {
        TrueTally::Count { winners, total }
    }

    pub fn share(p: f64) -> Self {
        TrueTally::Share { p }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TrueTally::Count { winners, total } if winners > total => invalid(format!(
                "true tally {winners} exceeds the {total} ballots cast"
            )),
            TrueTally::Share { p } if !(0.0..=1.0).contains(&p) => {
                invalid(format!("true share must lie in [0, 1] (got {p})"))
            }
            _ => Ok(()),
        }
    }

    /// Winner share implied by the tally.
    pub fn share_value(&self) -> f64 {
        match *self {
            TrueTally::Count { winners, total } => winners as f64 / total as f64,
            TrueTally::Share { p } => p,
        }
    }

    /// The tally appropriate for `scheme`: a count when sampling without
    /// replacement (rounding `p_T N` to the nearest integer), a share otherwise.
    pub fn for_scheme(&self, scheme: &SamplingScheme) -> Result<TrueTally> {
        self.validate()?;
        match (scheme.mode, *self) {
            (SamplingMode::WithoutReplacement, TrueTally::Count { total, .. }) => {
                let n = scheme.require_total("a tally count")?;
                if n != total {
                    return invalid(format!(
                        "tally is out of {total} ballots but the contest has {n}"
                    ));
                }
                Ok(*self)
            }
            (SamplingMode::WithoutReplacement, TrueTally::Share { p }) => {
                let n = scheme.require_total("sampling without replacement")?;
                Ok(TrueTally::Count {
                    winners: (p * n as f64).round() as u64,
                    total: n,
                })
            }
            (SamplingMode::WithReplacement, _) => Ok(TrueTally::Share {
                p: self.share_value(),
            }),
        }
    }
}
