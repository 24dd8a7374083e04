//! Stopping rules and their schedules of check points.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::method::ScoreScale;
use crate::sample::SamplingScheme;

/// Sample sizes at which the stopping rule is evaluated.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Schedule {
    /// Every `step` draws, plus the maximum sample size.
    Increment { step: u64 },
    /// Explicit check points; the maximum sample size is always added.
    Points { points: Vec<u64> },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Increment { step: 1 }
    }
}

impl Schedule {
    pub fn increment(step: u64) -> Self {
        Schedule::Increment { step }
    }

    /// Check points up to and including `max_sample`.
    pub fn check_points(&self, max_sample: u64) -> Vec<u64> {
        let mut out: Vec<u64> = match self {
            Schedule::Increment { step } => {
                let step = (*step).max(1);
                (1..=max_sample / step).map(|k| k * step).collect()
            }
            Schedule::Points { points } => {
                let mut pts: Vec<u64> = points
                    .iter()
                    .copied()
                    .filter(|&p| p >= 1 && p < max_sample)
                    .collect();
                pts.sort_unstable();
                pts.dedup();
                pts
            }
        };
        if out.last() != Some(&max_sample) && max_sample > 0 {
            out.push(max_sample);
        }
        out
    }

    pub fn is_check_point(&self, n: u64, max_sample: u64) -> bool {
        if n == max_sample {
            return true;
        }
        if n == 0 || n > max_sample {
            return false;
        }
        match self {
            Schedule::Increment { step } => n.is_multiple_of((*step).max(1)),
            Schedule::Points { points } => points.contains(&n),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Schedule::Increment { step: 0 } => invalid("schedule increment must be at least 1"),
            Schedule::Increment { .. } => Ok(()),
            Schedule::Points { points } => {
                if points.windows(2).any(|w| w[0] >= w[1]) {
                    return invalid("schedule points must be strictly increasing");
                }
                if points.first() == Some(&0) {
                    return invalid("schedule points must be positive");
                }
                Ok(())
            }
        }
    }
}

/// Thresholds and sample-size limits of a sequential audit.
///
/// Thresholds are on the statistic's natural scale: a ratio statistic
/// certifies when it exceeds `upper`, ClipAudit when its raw value does.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    pub upper: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    pub max_sample: u64,
    #[serde(default)]
    pub min_sample: u64,
    #[serde(default)]
    pub schedule: Schedule,
}

impl StoppingRule {
    pub fn new(upper: f64, max_sample: u64) -> Self {
        Self {
            upper,
            lower: None,
            max_sample,
            min_sample: 0,
            schedule: Schedule::default(),
        }
    }

    pub fn with_lower(mut self, lower: f64) -> Self {
        self.lower = Some(lower);
        self
    }

    pub fn with_min_sample(mut self, min_sample: u64) -> Self {
        self.min_sample = min_sample;
        self
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_upper(&self, upper: f64) -> Self {
        Self {
            upper,
            ..self.clone()
        }
    }

    pub fn check_points(&self) -> Vec<u64> {
        self.schedule.check_points(self.max_sample)
    }

    pub fn is_check_point(&self, n: u64) -> bool {
        self.schedule.is_check_point(n, self.max_sample)
    }

    pub fn validate(&self, scale: ScoreScale, scheme: &SamplingScheme) -> Result<()> {
        scheme.validate()?;
        self.schedule.validate()?;
        if self.max_sample == 0 {
            return invalid("maximum sample size must be at least 1");
        }
        if self.min_sample > self.max_sample {
            return invalid(format!(
                "minimum sample size {} exceeds maximum {}",
                self.min_sample, self.max_sample
            ));
        }
        if let Some(total) = scheme
            .total_ballots
            .filter(|_| scheme.is_without_replacement())
        {
            if self.max_sample > total {
                return invalid(format!(
                    "maximum sample size {} exceeds the {total} ballots cast",
                    self.max_sample
                ));
            }
        }
        if self.upper.is_nan() || (scale == ScoreScale::Log && !(self.upper > 0.0)) {
            return invalid(format!(
                "upper threshold must be positive (got {})",
                self.upper
            ));
        }
        if let Some(l) = self.lower {
            if l.is_nan() || (scale == ScoreScale::Log && l < 0.0) {
                return invalid(format!("lower threshold must be nonnegative (got {l})"));
            }
            if l >= self.upper {
                return invalid(format!(
                    "lower threshold {l} must be below the upper threshold {}",
                    self.upper
                ));
            }
        }
        Ok(())
    }

    /// Thresholds on the score scale used for comparisons.
    pub fn score_thresholds(&self, scale: ScoreScale) -> (f64, Option<f64>) {
        (
            scale.to_score(self.upper),
            self.lower.map(|l| scale.to_score(l)),
        )
    }
}
