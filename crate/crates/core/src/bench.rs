//! Declarative experiment grids: calibrate each method, then evaluate power
//! and mean sample size across true vote shares.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{calibrate, nominal_threshold, DEFAULT_TOLERANCE};
use crate::engine::{Schedule, StoppingRule};
use crate::error::{invalid, AuditError, Result};
use crate::exact::{
    boundary_with_cache, forward_dp, forward_dp_with_boundary, max_risk, worst_case_tally,
    EvalResult, ScoreCache,
};
use crate::method::{MethodSpec, NominalScale};
use crate::montecarlo::{calibrate_monte_carlo, simulate};
use crate::sample::{SamplingMode, SamplingScheme, TrueTally};

/// How a row's threshold is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationMode {
    /// Calibrated so the maximum risk is as close to `alpha` as possible.
    Calibrated,
    /// The method's own threshold for `alpha` (for example `h = 1/alpha`),
    /// or the entry's explicit threshold.
    Uncalibrated,
}

/// One method in a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodEntry {
    #[serde(flatten)]
    pub method: MethodSpec,
    #[serde(default = "default_modes")]
    pub modes: Vec<CalibrationMode>,
    /// Threshold for uncalibrated rows, overriding the automatic one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

fn default_modes() -> Vec<CalibrationMode> {
    vec![CalibrationMode::Calibrated]
}

impl MethodEntry {
    pub fn calibrated(method: MethodSpec) -> Self {
        Self {
            method,
            modes: default_modes(),
            threshold: None,
        }
    }

    pub fn uncalibrated(method: MethodSpec, threshold: Option<f64>) -> Self {
        Self {
            method,
            modes: vec![CalibrationMode::Uncalibrated],
            threshold,
        }
    }
}

/// Simulation settings for methods whose statistic depends on draw order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSettings {
    pub trials: u64,
    pub seed: u64,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

fn default_confidence() -> f64 {
    0.95
}

/// A grid of experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_mode")]
    pub mode: SamplingMode,
    /// Election sizes (ignored when sampling with replacement).
    #[serde(default)]
    pub total_ballots: Vec<u64>,
    pub max_samples: Vec<u64>,
    /// True vote shares of the reported winner.
    pub shares: Vec<f64>,
    pub methods: Vec<MethodEntry>,
    #[serde(default = "default_increments")]
    pub increments: Vec<u64>,
    #[serde(default = "default_min_samples")]
    pub min_samples: Vec<u64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Needed only for order-dependent methods.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSettings>,
}

fn default_name() -> String {
    "experiment".into()
}
fn default_mode() -> SamplingMode {
    SamplingMode::WithoutReplacement
}
fn default_increments() -> Vec<u64> {
    vec![1]
}
fn default_min_samples() -> Vec<u64> {
    vec![0]
}
fn default_alpha() -> f64 {
    0.05
}
fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

const TABLE_SHARES: [f64; 5] = [0.52, 0.55, 0.60, 0.64, 0.70];

impl ExperimentConfig {
    /// A named preset: `paper-main`, `min-sample-300` or `fig1`.
    pub fn preset(name: &str) -> Result<Self> {
        let base = |name: &str, methods: Vec<MethodEntry>| ExperimentConfig {
            name: name.into(),
            mode: SamplingMode::WithoutReplacement,
            total_ballots: vec![20_000],
            max_samples: vec![2_000],
            shares: TABLE_SHARES.to_vec(),
            methods,
            increments: vec![1],
            min_samples: vec![0],
            alpha: 0.05,
            tolerance: DEFAULT_TOLERANCE,
            simulation: None,
        };
        let c = MethodEntry::calibrated;
        let u = |m| MethodEntry::uncalibrated(m, None);
        Ok(match name {
            "paper-main" => base(
                name,
                vec![
                    c(MethodSpec::bayesian_beta(1.0, 1.0)),
                    c(MethodSpec::bayesian_beta(100.0, 100.0)),
                    c(MethodSpec::bayesian_beta(500.0, 500.0)),
                    c(MethodSpec::risk_max(1.0, 1.0)),
                    c(MethodSpec::bravo(0.7)),
                    c(MethodSpec::bravo(0.55)),
                    c(MethodSpec::bravo(0.51)),
                    c(MethodSpec::max_bravo()),
                    c(MethodSpec::clip_audit()),
                    u(MethodSpec::risk_max(1.0, 1.0)),
                    u(MethodSpec::bravo(0.7)),
                    u(MethodSpec::bravo(0.55)),
                    u(MethodSpec::bravo(0.51)),
                ],
            ),
            "min-sample-300" => ExperimentConfig {
                min_samples: vec![300],
                ..base(
                    name,
                    vec![
                        c(MethodSpec::bayesian_beta(1.0, 1.0)),
                        c(MethodSpec::risk_max(1.0, 1.0)),
                        c(MethodSpec::bravo(0.7)),
                        c(MethodSpec::bravo(0.55)),
                        c(MethodSpec::bravo(0.51)),
                        c(MethodSpec::max_bravo()),
                        c(MethodSpec::clip_audit()),
                    ],
                )
            },
            "fig1" => ExperimentConfig {
                shares: vec![0.5],
                ..base(
                    name,
                    vec![
                        c(MethodSpec::bayesian_beta(1.0, 1.0)),
                        c(MethodSpec::risk_max(1.0, 1.0)),
                        c(MethodSpec::bravo(0.7)),
                        c(MethodSpec::bravo(0.55)),
                        c(MethodSpec::max_bravo()),
                        c(MethodSpec::clip_audit()),
                    ],
                )
            },
            other => {
                return invalid(format!(
                    "unknown preset {other:?} (expected paper-main, min-sample-300 or fig1)"
                ))
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        let nonempty = [
            ("max_samples", self.max_samples.is_empty()),
            ("shares", self.shares.is_empty()),
            ("methods", self.methods.is_empty()),
            ("increments", self.increments.is_empty()),
            ("min_samples", self.min_samples.is_empty()),
        ];
        if let Some((field, _)) = nonempty.iter().find(|(_, empty)| *empty) {
            return invalid(format!("{field} must not be empty"));
        }
        if self.mode == SamplingMode::WithoutReplacement && self.total_ballots.is_empty() {
            return invalid("total_ballots must not be empty when sampling without replacement");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return invalid(format!("alpha must lie in (0, 1) (got {})", self.alpha));
        }
        if self.shares.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return invalid("shares must lie in [0, 1]");
        }
        for entry in &self.methods {
            entry.method.validate()?;
            if entry.modes.is_empty() {
                return invalid(format!("{}: modes must not be empty", entry.method.label()));
            }
        }
        for scheme in self.schemes() {
            for &m in &self.max_samples {
                scheme.check_sample_size(m)?;
                for &inc in &self.increments {
                    for &n_min in &self.min_samples {
                        StoppingRule::new(1.0, m)
                            .with_schedule(Schedule::increment(inc))
                            .with_min_sample(n_min)
                            .validate(crate::method::ScoreScale::Raw, &scheme)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn schemes(&self) -> Vec<SamplingScheme> {
        match self.mode {
            SamplingMode::WithReplacement => vec![SamplingScheme::with_replacement()],
            SamplingMode::WithoutReplacement => self
                .total_ballots
                .iter()
                .map(|&n| SamplingScheme::without_replacement(n))
                .collect(),
        }
    }

    fn rows(&self) -> Vec<RowSpec> {
        let mut rows = Vec::new();
        for scheme in self.schemes() {
            for &max_sample in &self.max_samples {
                for &increment in &self.increments {
                    for &min_sample in &self.min_samples {
                        for entry in &self.methods {
                            for &mode in &entry.modes {
                                rows.push(RowSpec {
                                    scheme,
                                    template: StoppingRule::new(1.0, max_sample)
                                        .with_schedule(Schedule::increment(increment))
                                        .with_min_sample(min_sample),
                                    increment,
                                    method: entry.method.clone(),
                                    mode,
                                    threshold: entry.threshold,
                                });
                            }
                        }
                    }
                }
            }
        }
        rows
    }
}

struct RowSpec {
    scheme: SamplingScheme,
    template: StoppingRule,
    increment: u64,
    method: MethodSpec,
    mode: CalibrationMode,
    threshold: Option<f64>,
}

/// How a row was evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Evaluator {
    Exact,
    MonteCarlo,
}

/// Power and mean sample size at one true vote share.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub share: f64,
    pub power: Option<f64>,
    pub mean_sample_size: Option<f64>,
    pub error: Option<String>,
}

/// One method under one setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub label: String,
    pub method: MethodSpec,
    pub mode: CalibrationMode,
    pub total_ballots: Option<u64>,
    pub max_sample: u64,
    pub increment: u64,
    pub min_sample: u64,
    pub evaluator: Evaluator,
    pub raw_h: Option<f64>,
    pub nominal_scale: NominalScale,
    pub nominal: Option<f64>,
    pub achieved_risk: Option<f64>,
    pub cells: Vec<BenchCell>,
    /// Set when the threshold could not be determined; the cells are then empty.
    pub error: Option<String>,
}

/// All rows of a grid, in configuration order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub name: String,
    pub alpha: f64,
    pub shares: Vec<f64>,
    pub rows: Vec<BenchRow>,
}

/// Runs every cell of `config` on up to `jobs` threads. Cell failures are
/// recorded in the report; only an invalid configuration is an error.
pub fn run_benchmark(config: &ExperimentConfig, jobs: usize) -> Result<BenchReport> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| AuditError::InvalidConfig(format!("cannot start worker threads: {e}")))?;
    let specs = config.rows();
    let rows = pool.install(|| specs.par_iter().map(|spec| run_row(config, spec)).collect());
    Ok(BenchReport {
        name: config.name.clone(),
        alpha: config.alpha,
        shares: config.shares.clone(),
        rows,
    })
}

fn run_row(config: &ExperimentConfig, spec: &RowSpec) -> BenchRow {
    let evaluator = if spec.method.is_order_dependent(&spec.scheme) {
        Evaluator::MonteCarlo
    } else {
        Evaluator::Exact
    };
    let mut row = BenchRow {
        label: spec.method.label(),
        method: spec.method.clone(),
        mode: spec.mode,
        total_ballots: spec.scheme.total_ballots,
        max_sample: spec.template.max_sample,
        increment: spec.increment,
        min_sample: spec.template.min_sample,
        evaluator,
        raw_h: None,
        nominal_scale: spec.method.nominal_scale(),
        nominal: None,
        achieved_risk: None,
        cells: Vec::new(),
        error: None,
    };
    let threshold = match threshold_for(config, spec, evaluator) {
        Ok(t) => t,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    row.raw_h = Some(threshold.rule.upper);
    row.nominal = Some(threshold.nominal);
    row.achieved_risk = Some(threshold.risk);
    row.cells = config
        .shares
        .iter()
        .map(|&share| {
            let result = evaluate_cell(config, spec, evaluator, &threshold.rule, share);
            match result {
                Ok((power, mean)) => BenchCell {
                    share,
                    power: Some(power),
                    mean_sample_size: Some(mean),
                    error: None,
                },
                Err(e) => BenchCell {
                    share,
                    power: None,
                    mean_sample_size: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    row
}

struct Threshold {
    rule: StoppingRule,
    nominal: f64,
    risk: f64,
}

fn simulation(config: &ExperimentConfig, method: &MethodSpec) -> Result<SimulationSettings> {
    config.simulation.ok_or_else(|| {
        AuditError::Unsupported(format!(
            "{} depends on draw order; set `simulation` to evaluate it by Monte Carlo",
            method.label()
        ))
    })
}

fn threshold_for(
    config: &ExperimentConfig,
    spec: &RowSpec,
    evaluator: Evaluator,
) -> Result<Threshold> {
    let method = &spec.method;
    match (spec.mode, evaluator) {
        (CalibrationMode::Calibrated, Evaluator::Exact) => {
            let cal = calibrate(
                method,
                &spec.template,
                &spec.scheme,
                config.alpha,
                config.tolerance,
            )?;
            Ok(Threshold {
                nominal: cal.nominal,
                risk: cal.achieved_risk,
                rule: cal.rule,
            })
        }
        (CalibrationMode::Calibrated, Evaluator::MonteCarlo) => {
            let sim = simulation(config, method)?;
            let cal = calibrate_monte_carlo(
                method,
                &spec.template,
                &spec.scheme,
                config.alpha,
                sim.trials,
                sim.seed,
                sim.confidence,
            )?;
            Ok(Threshold {
                nominal: nominal_threshold(method, &spec.scheme, cal.raw_h)?,
                risk: cal.estimated_risk,
                rule: cal.rule,
            })
        }
        (CalibrationMode::Uncalibrated, _) => {
            let h = spec
                .threshold
                .or_else(|| method.automatic_threshold(config.alpha))
                .ok_or_else(|| {
                    AuditError::InvalidConfig(format!(
                        "{} has no automatic threshold; give an explicit `threshold`",
                        method.label()
                    ))
                })?;
            let rule = spec.template.with_upper(h);
            rule.validate(method.score_scale(), &spec.scheme)?;
            let risk = match evaluator {
                Evaluator::Exact => max_risk(method, &rule, &spec.scheme)?,
                Evaluator::MonteCarlo => {
                    let sim = simulation(config, method)?;
                    simulate(
                        method,
                        &rule,
                        &spec.scheme,
                        &worst_case_tally(&spec.scheme)?,
                        sim.trials,
                        sim.seed,
                    )?
                    .power
                }
            };
            Ok(Threshold {
                nominal: nominal_threshold(method, &spec.scheme, h)?,
                risk,
                rule,
            })
        }
    }
}

fn evaluate_cell(
    config: &ExperimentConfig,
    spec: &RowSpec,
    evaluator: Evaluator,
    rule: &StoppingRule,
    share: f64,
) -> Result<(f64, f64)> {
    let tally = TrueTally::share(share);
    match evaluator {
        Evaluator::Exact => {
            let r = forward_dp(&spec.method, rule, &spec.scheme, &tally)?;
            Ok((r.power, r.mean_sample_size))
        }
        Evaluator::MonteCarlo => {
            let sim = simulation(config, &spec.method)?;
            let r = simulate(
                &spec.method,
                rule,
                &spec.scheme,
                &tally,
                sim.trials,
                sim.seed,
            )?;
            Ok((r.power, r.mean_sample_size))
        }
    }
}

impl BenchReport {
    /// Number of rows and cells that failed.
    pub fn failures(&self) -> usize {
        self.rows
            .iter()
            .map(|r| {
                r.error.is_some() as usize + r.cells.iter().filter(|c| c.error.is_some()).count()
            })
            .sum()
    }

    /// Wide CSV: one line per row, a power and mean-sample-size column per share.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# pollaudit-bench v1\n");
        out.push_str("method,calibration,N,m,increment,n_min,evaluator,nominal_scale,nominal,raw_h,achieved_risk");
        for p in &self.shares {
            let _ = write!(out, ",power@{p},mean@{p}");
        }
        out.push_str(",error\n");
        for row in &self.rows {
            let _ = write!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                csv_text(&row.label),
                kebab(&row.mode),
                opt(row.total_ballots.map(|n| n as f64)),
                row.max_sample,
                row.increment,
                row.min_sample,
                kebab(&row.evaluator),
                kebab(&row.nominal_scale),
                opt(row.nominal),
                opt(row.raw_h),
                opt(row.achieved_risk),
            );
            let mut errors: Vec<String> = row.error.iter().cloned().collect();
            for (i, _) in self.shares.iter().enumerate() {
                match row.cells.get(i) {
                    Some(c) => {
                        let _ = write!(out, ",{},{}", opt(c.power), opt(c.mean_sample_size));
                        if let Some(e) = &c.error {
                            errors.push(format!("p={}: {e}", c.share));
                        }
                    }
                    None => out.push_str(",,"),
                }
            }
            let _ = writeln!(out, ",{}", csv_text(&errors.join("; ")));
        }
        out
    }

    /// Aligned text table: nominal threshold and power in percent, mean
    /// sample sizes rounded.
    pub fn to_table(&self) -> String {
        let mut header = vec![
            "Method".to_string(),
            "Cal.".into(),
            "N".into(),
            "m".into(),
            "inc".into(),
            "n_min".into(),
            "Nominal".into(),
            "Risk (%)".into(),
        ];
        header.extend(self.shares.iter().map(|p| format!("Power {}", pct(*p, 0))));
        header.extend(self.shares.iter().map(|p| format!("Mean {}", pct(*p, 0))));
        let mut lines = vec![header];
        for row in &self.rows {
            let mut line = vec![
                row.label.clone(),
                match row.mode {
                    CalibrationMode::Calibrated => "cal".into(),
                    CalibrationMode::Uncalibrated => "auto".into(),
                },
                row.total_ballots.map_or("-".into(), |n| n.to_string()),
                row.max_sample.to_string(),
                row.increment.to_string(),
                row.min_sample.to_string(),
                match (row.nominal, row.nominal_scale) {
                    (Some(v), NominalScale::RawThreshold) => format!("c={v:.3}"),
                    (Some(v), _) => pct(v, 1),
                    (None, _) => "error".into(),
                },
                row.achieved_risk
                    .map_or("-".into(), |r| format!("{:.3}", 100.0 * r)),
            ];
            let cells = |f: &dyn Fn(&BenchCell) -> String| -> Vec<String> {
                (0..self.shares.len())
                    .map(|i| row.cells.get(i).map_or("-".into(), f))
                    .collect()
            };
            line.extend(cells(&|c| {
                c.power
                    .map_or("err".into(), |p| format!("{:.0}", 100.0 * p))
            }));
            line.extend(cells(&|c| {
                c.mean_sample_size
                    .map_or("err".into(), |m| format!("{m:.0}"))
            }));
            lines.push(line);
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|j| {
                lines
                    .iter()
                    .map(|l| l[j].chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for (i, line) in lines.iter().enumerate() {
            let cells: Vec<String> = line
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    if j == 0 {
                        format!("{s:<w$}", w = widths[j])
                    } else {
                        format!("{s:>w$}", w = widths[j])
                    }
                })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
                out.push('\n');
            }
        }
        for row in &self.rows {
            if let Some(e) = &row.error {
                let _ = writeln!(out, "error: {}: {e}", row.label);
            }
            for c in row.cells.iter().filter(|c| c.error.is_some()) {
                let _ = writeln!(
                    out,
                    "error: {} at p={}: {}",
                    row.label,
                    c.share,
                    c.error.as_deref().unwrap_or("")
                );
            }
        }
        out
    }
}

fn pct(v: f64, digits: usize) -> String {
    format!("{:.*}", digits, 100.0 * v)
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

fn kebab<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Stopping distribution of a calibrated method at a true tally.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmfExport {
    pub label: String,
    pub rule: StoppingRule,
    pub achieved_risk: f64,
    pub result: EvalResult,
}

/// Writes the stopping distribution of `rule` at `tally` as CSV to `path`.
pub fn export_pmf(
    method: &MethodSpec,
    rule: &StoppingRule,
    scheme: &SamplingScheme,
    tally: &TrueTally,
    path: &Path,
) -> Result<EvalResult> {
    let result = forward_dp(method, rule, scheme, tally)?;
    std::fs::write(path, result.to_csv())?;
    Ok(result)
}

/// Calibrates every method of `config` (first size, first maximum, first
/// increment and minimum) and computes its stopping distribution at the
/// worst-case tally, as in a sample-size distribution plot.
pub fn null_pmfs(config: &ExperimentConfig, jobs: usize) -> Result<Vec<PmfExport>> {
    config.validate()?;
    let scheme = config.schemes().remove(0);
    let template = StoppingRule::new(1.0, config.max_samples[0])
        .with_schedule(Schedule::increment(config.increments[0]))
        .with_min_sample(config.min_samples[0]);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| AuditError::InvalidConfig(format!("cannot start worker threads: {e}")))?;
    pool.install(|| {
        config
            .methods
            .par_iter()
            .map(|entry| {
                let cal = calibrate(
                    &entry.method,
                    &template,
                    &scheme,
                    config.alpha,
                    config.tolerance,
                )?;
                let mut cache = ScoreCache::new(&entry.method, &scheme)?;
                let boundary = boundary_with_cache(&mut cache, &entry.method, &cal.rule, &scheme)?;
                let result = forward_dp_with_boundary(
                    &boundary,
                    &cal.rule,
                    &scheme,
                    &worst_case_tally(&scheme)?,
                )?;
                Ok(PmfExport {
                    label: entry.method.label(),
                    achieved_risk: cal.achieved_risk,
                    rule: cal.rule,
                    result,
                })
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            name: "small".into(),
            mode: SamplingMode::WithoutReplacement,
            total_ballots: vec![1000],
            max_samples: vec![200],
            shares: vec![0.55, 0.6],
            methods: vec![
                MethodEntry::calibrated(MethodSpec::bravo(0.6)),
                MethodEntry::uncalibrated(MethodSpec::bravo(0.6), None),
                MethodEntry::uncalibrated(MethodSpec::clip_audit(), None),
            ],
            increments: vec![1],
            min_samples: vec![0],
            alpha: 0.05,
            tolerance: DEFAULT_TOLERANCE,
            simulation: None,
        }
    }

    #[test]
    fn single_cell_matches_direct_calls() {
        let report = run_benchmark(&small(), 2).unwrap();
        let wor = SamplingScheme::without_replacement(1000);
        let cal = calibrate(
            &MethodSpec::bravo(0.6),
            &StoppingRule::new(1.0, 200),
            &wor,
            0.05,
            DEFAULT_TOLERANCE,
        )
        .unwrap();
        let direct = forward_dp(
            &MethodSpec::bravo(0.6),
            &cal.rule,
            &wor,
            &TrueTally::share(0.6),
        )
        .unwrap();
        let row = &report.rows[0];
        assert_eq!(row.raw_h, Some(cal.raw_h));
        assert_eq!(row.cells[1].power, Some(direct.power));
        assert_eq!(row.cells[1].mean_sample_size, Some(direct.mean_sample_size));
    }

    #[test]
    fn failures_are_per_cell() {
        let report = run_benchmark(&small(), 1).unwrap();
        assert_eq!(report.failures(), 1);
        assert!(report.rows[2].error.is_some());
        assert!(report.rows[1].error.is_none());
        let csv = report.to_csv();
        assert!(csv.starts_with("# pollaudit-bench v1\n"));
        assert_eq!(csv.lines().count(), 2 + 3);
        assert!(report.to_table().contains("error: ClipAudit"));
    }

    #[test]
    fn output_is_independent_of_jobs() {
        assert_eq!(
            run_benchmark(&small(), 1).unwrap().to_csv(),
            run_benchmark(&small(), 3).unwrap().to_csv()
        );
    }

    #[test]
    fn presets_validate() {
        for name in ["paper-main", "min-sample-300", "fig1"] {
            ExperimentConfig::preset(name).unwrap().validate().unwrap();
        }
        assert!(ExperimentConfig::preset("nope").is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = ExperimentConfig::preset("paper-main").unwrap();
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&json).unwrap(), c);
        let minimal: ExperimentConfig = serde_json::from_str(
            r#"{"total_ballots":[500],"max_samples":[100],"shares":[0.6],"methods":[{"kind":"bravo","p1":0.6}]}"#,
        )
        .unwrap();
        assert_eq!(minimal.increments, vec![1]);
        assert_eq!(minimal.methods[0].modes, vec![CalibrationMode::Calibrated]);
    }
}
