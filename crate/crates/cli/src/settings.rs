//! Settings assembled from an optional JSON config file with command-line
//! flags layered on top. Every config key has a flag of the same name
//! (`total_ballots` is `--total-ballots`).

use std::path::Path;

use anyhow::{bail, Context};
use clap::Args;
use pollaudit_core::calibrate::{calibrate, Calibration, DEFAULT_TOLERANCE};
use pollaudit_core::engine::{Schedule, StoppingRule};
use pollaudit_core::{MethodSpec, SamplingMode, SamplingScheme};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Reads `config` (a JSON object) and overwrites its keys with the flags
/// that were given, then deserializes the result.
pub fn merge<T: DeserializeOwned>(
    config: Option<&Path>,
    base: Option<Value>,
    flags: &impl Serialize,
) -> anyhow::Result<T> {
    let mut merged = match base {
        Some(Value::Object(m)) => m,
        Some(_) => bail!("base settings must be a JSON object"),
        None => Map::new(),
    };
    if let Some(path) = config {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let Value::Object(file) =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        else {
            bail!("{} must hold a JSON object", path.display());
        };
        merged.extend(file);
    }
    let Value::Object(over) = serde_json::to_value(flags)? else {
        bail!("flags did not serialize to an object");
    };
    merged.extend(over.into_iter().filter(|(_, v)| !v.is_null()));
    if let Some(Value::String(short)) = merged.get("method") {
        let method = parse_method(short).map_err(anyhow::Error::msg)?;
        merged.insert("method".into(), serde_json::to_value(method)?);
    }
    serde_json::from_value(Value::Object(merged)).context("invalid settings")
}

/// Parses a method as JSON (`{"kind":"bravo","p1":0.55}`) or shorthand (`bravo:p1=0.55`).
pub fn parse_method(s: &str) -> Result<MethodSpec, String> {
    if s.trim_start().starts_with('{') {
        serde_json::from_str(s).map_err(|e| e.to_string())
    } else {
        s.parse()
            .map_err(|e: pollaudit_core::AuditError| e.to_string())
    }
}

fn parse_json(s: &str) -> Result<Value, String> {
    serde_json::from_str(s).map_err(|e| e.to_string())
}

/// Flags describing one audit: sampling, method and stopping rule.
#[derive(Args, Debug, Default, Serialize)]
pub struct RuleFlags {
    /// JSON file with any of the keys below.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<std::path::PathBuf>,
    /// with-replacement or without-replacement.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_ballots: Option<u64>,
    /// Method as JSON or shorthand, e.g. bravo:p1=0.55, bayesian:a=1,b=1, riskmax, maxbravo, clip.
    #[arg(long, value_parser = parse_method)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodSpec>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_sample: Option<u64>,
    /// Upper threshold; when absent it is calibrated to `alpha`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    /// Evaluate the rule every this many draws.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub increment: Option<u64>,
    /// Explicit check points (comma-separated) instead of an increment.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub check_points: Option<Vec<u64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_sample: Option<u64>,
    /// Risk limit.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// True winner shares to evaluate (comma-separated).
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shares: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

fn default_scheme() -> SamplingMode {
    SamplingMode::WithoutReplacement
}

fn one() -> u64 {
    1
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSettings {
    #[serde(default = "default_scheme")]
    pub scheme: SamplingMode,
    #[serde(default)]
    pub total_ballots: Option<u64>,
    pub method: MethodSpec,
    pub max_sample: u64,
    #[serde(default)]
    pub upper: Option<f64>,
    #[serde(default)]
    pub lower: Option<f64>,
    #[serde(default = "one")]
    pub increment: u64,
    #[serde(default)]
    pub check_points: Option<Vec<u64>>,
    #[serde(default)]
    pub min_sample: u64,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub shares: Option<Vec<f64>>,
    #[serde(default)]
    pub trials: Option<u64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub confidence: Option<f64>,
}

impl RuleSettings {
    pub fn load(flags: &RuleFlags) -> anyhow::Result<Self> {
        merge(flags.config.as_deref(), None, flags)
    }

    pub fn scheme(&self) -> anyhow::Result<SamplingScheme> {
        let s = SamplingScheme {
            mode: self.scheme,
            total_ballots: self.total_ballots,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(0.05)
    }

    /// The rule with `upper` as given, or 1 as a placeholder for calibration.
    pub fn template(&self) -> StoppingRule {
        let schedule = match &self.check_points {
            Some(points) => Schedule::Points {
                points: points.clone(),
            },
            None => Schedule::increment(self.increment),
        };
        let mut rule = StoppingRule::new(self.upper.unwrap_or(1.0), self.max_sample)
            .with_schedule(schedule)
            .with_min_sample(self.min_sample);
        rule.lower = self.lower;
        rule
    }

    pub fn calibrate(&self) -> anyhow::Result<Calibration> {
        Ok(calibrate(
            &self.method,
            &self.template(),
            &self.scheme()?,
            self.alpha(),
            self.tolerance.unwrap_or(DEFAULT_TOLERANCE),
        )?)
    }

    /// The explicit rule if `upper` was given, otherwise the calibrated one.
    pub fn rule(&self) -> anyhow::Result<(StoppingRule, Option<Calibration>)> {
        if self.upper.is_some() {
            let rule = self.template();
            rule.validate(self.method.score_scale(), &self.scheme()?)?;
            return Ok((rule, None));
        }
        let cal = self.calibrate()?;
        Ok((cal.rule.clone(), Some(cal)))
    }
}

/// Flags overriding the keys of a benchmark configuration.
#[derive(Args, Debug, Default, Serialize)]
pub struct BenchFlags {
    /// JSON file holding a benchmark configuration.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<std::path::PathBuf>,
    /// Start from a built-in configuration: paper-main, min-sample-300 or fig1.
    #[arg(long)]
    #[serde(skip)]
    pub preset: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// with-replacement or without-replacement.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_ballots: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_samples: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shares: Option<Vec<f64>>,
    /// Methods as a JSON array of method entries.
    #[arg(long, value_parser = parse_json)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub methods: Option<Value>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub increments: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_samples: Option<Vec<u64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Simulation settings as JSON, e.g. {"trials":10000,"seed":1}.
    #[arg(long, value_parser = parse_json)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<Value>,
}

impl BenchFlags {
    pub fn load(&self) -> anyhow::Result<pollaudit_core::bench::ExperimentConfig> {
        let base = match &self.preset {
            Some(name) => Some(serde_json::to_value(
                pollaudit_core::bench::ExperimentConfig::preset(name)?,
            )?),
            None => None,
        };
        if base.is_none() && self.config.is_none() {
            bail!("give --preset or --config");
        }
        let config: pollaudit_core::bench::ExperimentConfig =
            merge(self.config.as_deref(), base, self)?;
        config.validate()?;
        Ok(config)
    }
}
