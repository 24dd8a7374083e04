//! `pollaudit`: calibrate, evaluate and benchmark ballot-polling audits, run
//! an audit interactively, or serve the HTTP API.

mod session;
mod settings;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use pollaudit_core::bench::{null_pmfs, run_benchmark};
use pollaudit_core::engine::ContestConfig;
use pollaudit_core::exact::{forward_dp, max_risk, worst_case_tally};
use pollaudit_core::montecarlo::{calibrate_monte_carlo, simulate};
use pollaudit_core::TrueTally;
use serde_json::json;

use settings::{BenchFlags, RuleFlags, RuleSettings};

#[derive(Parser, Debug)]
#[command(
    name = "pollaudit",
    version,
    about = "Ballot-polling audit calibration, evaluation and benchmarks"
)]
struct Cli {
    /// Worker threads for benchmarks and distribution exports.
    #[arg(long, global = true, env = "POLLAUDIT_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Find the most permissive threshold whose maximum risk is within alpha.
    Calibrate {
        #[command(flatten)]
        rule: RuleFlags,
        /// Calibrate by simulation (uses --trials, --seed and --confidence).
        #[arg(long)]
        simulated: bool,
    },
    /// Maximum risk of a rule with an explicit threshold.
    Risk {
        #[command(flatten)]
        rule: RuleFlags,
    },
    /// Exact power and mean sample size at each true share.
    Evaluate {
        #[command(flatten)]
        rule: RuleFlags,
    },
    /// Run a benchmark grid and report it against the reference values.
    Benchmark {
        #[command(flatten)]
        bench: BenchFlags,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        /// Write the report here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Export stopping-size distributions as CSV.
    Pmf {
        #[command(flatten)]
        rule: RuleFlags,
        /// Export every method of a benchmark preset at its worst-case tally into --out-dir.
        #[arg(long, conflicts_with = "output")]
        preset: Option<String>,
        #[arg(long, requires = "preset")]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Monte Carlo power and sample size at each true share.
    Simulate {
        #[command(flatten)]
        rule: RuleFlags,
        /// Also write the stopping distribution of the first share here.
        #[arg(long)]
        pmf_output: Option<PathBuf>,
    },
    /// Audit a contest round by round from standard input.
    Session {
        #[command(flatten)]
        rule: RuleFlags,
        /// JSON-lines log; an existing log is replayed and extended.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, env = "POLLAUDIT_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "POLLAUDIT_DATA_DIR", default_value = "pollaudit-data")]
        data_dir: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    match run(cli.command, jobs) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn print_json(value: &impl serde::Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_out(path: Option<&PathBuf>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => Ok(std::io::stdout().write_all(text.as_bytes())?),
    }
}

fn shares(s: &RuleSettings) -> anyhow::Result<Vec<TrueTally>> {
    let scheme = s.scheme()?;
    match &s.shares {
        Some(shares) if !shares.is_empty() => shares
            .iter()
            .map(|&p| Ok(TrueTally::share(p).for_scheme(&scheme)?))
            .collect(),
        _ => Ok(vec![worst_case_tally(&scheme)?]),
    }
}

fn run(command: Command, jobs: usize) -> anyhow::Result<ExitCode> {
    match command {
        Command::Calibrate { rule, simulated } => {
            let s = RuleSettings::load(&rule)?;
            if simulated {
                let cal = calibrate_monte_carlo(
                    &s.method,
                    &s.template(),
                    &s.scheme()?,
                    s.alpha(),
                    s.trials.unwrap_or(10_000),
                    s.seed.unwrap_or(0),
                    s.confidence.unwrap_or(0.95),
                )?;
                print_json(&cal)?;
            } else {
                print_json(&s.calibrate()?)?;
            }
        }
        Command::Risk { rule } => {
            let s = RuleSettings::load(&rule)?;
            if s.upper.is_none() {
                bail!("--upper is required");
            }
            let scheme = s.scheme()?;
            let (r, _) = s.rule()?;
            if s.method.is_order_dependent(&scheme) {
                bail!(
                    "{} depends on draw order; use `simulate` at the worst-case tally",
                    s.method.label()
                );
            }
            let risk = max_risk(&s.method, &r, &scheme)?;
            print_json(&json!({ "method": s.method.label(), "rule": r, "max_risk": risk }))?;
        }
        Command::Evaluate { rule } => {
            let s = RuleSettings::load(&rule)?;
            let scheme = s.scheme()?;
            if s.method.is_order_dependent(&scheme) {
                bail!("{} depends on draw order; use `simulate`", s.method.label());
            }
            let (r, cal) = s.rule()?;
            let mut out = String::from("# pollaudit-evaluate v1\n");
            if let Some(cal) = &cal {
                let _ = writeln!(
                    out,
                    "# upper={:.17e} achieved_risk={:.17e}",
                    cal.rule.upper, cal.achieved_risk
                );
            }
            out.push_str(
                "share,power,mean_sample_size,full_count_probability,escalation_probability\n",
            );
            for tally in shares(&s)? {
                let e = forward_dp(&s.method, &r, &scheme, &tally)?;
                let esc: f64 = e.escalate_pmf.values().fold(0.0, |a, b| a + b);
                let _ = writeln!(
                    out,
                    "{},{:.17e},{:.17e},{:.17e},{:.17e}",
                    tally.share_value(),
                    e.power,
                    e.mean_sample_size,
                    e.full_count_mass,
                    esc
                );
            }
            write_out(None, &out)?;
        }
        Command::Benchmark {
            bench,
            format,
            output,
        } => {
            let config = bench.load()?;
            let report = run_benchmark(&config, jobs)?;
            let text = match format {
                Format::Table => report.to_table(),
                Format::Csv => report.to_csv(),
                Format::Json => serde_json::to_string_pretty(&report)? + "\n",
            };
            write_out(output.as_ref(), &text)?;
            let failures = report.failures();
            if failures > 0 {
                eprintln!("{failures} row(s) or cell(s) could not be computed");
                return Ok(ExitCode::from(1));
            }
        }
        Command::Pmf {
            rule,
            preset,
            out_dir,
            output,
        } => {
            if let Some(name) = preset {
                let config = pollaudit_core::bench::ExperimentConfig::preset(&name)?;
                let dir = out_dir.unwrap_or_else(|| PathBuf::from("."));
                std::fs::create_dir_all(&dir)?;
                for (i, export) in null_pmfs(&config, jobs)?.into_iter().enumerate() {
                    let path = dir.join(format!("{name}-{i:02}.csv"));
                    std::fs::write(&path, export.result.to_csv())?;
                    println!(
                        "{}\t{}\tachieved_risk={:.6}\tstop_mass={:.6}",
                        path.display(),
                        export.label,
                        export.achieved_risk,
                        export.result.power
                    );
                }
            } else {
                let s = RuleSettings::load(&rule)?;
                let scheme = s.scheme()?;
                let (r, _) = s.rule()?;
                let tally = shares(&s)?.remove(0);
                let e = forward_dp(&s.method, &r, &scheme, &tally)?;
                write_out(output.as_ref(), &e.to_csv())?;
            }
        }
        Command::Simulate { rule, pmf_output } => {
            let s = RuleSettings::load(&rule)?;
            let scheme = s.scheme()?;
            let trials = s.trials.unwrap_or(10_000);
            let seed = s.seed.unwrap_or(0);
            let mut out = String::from("# pollaudit-simulate v1\n");
            let r = if s.upper.is_some() {
                s.rule()?.0
            } else if s.method.is_order_dependent(&scheme) {
                let cal = calibrate_monte_carlo(
                    &s.method,
                    &s.template(),
                    &scheme,
                    s.alpha(),
                    trials,
                    seed,
                    s.confidence.unwrap_or(0.95),
                )?;
                let _ = writeln!(
                    out,
                    "# upper={:.17e} estimated_risk={:.17e} interval={:.17e}..{:.17e}",
                    cal.rule.upper, cal.estimated_risk, cal.risk_interval.0, cal.risk_interval.1
                );
                cal.rule
            } else {
                let cal = s.calibrate()?;
                let _ = writeln!(
                    out,
                    "# upper={:.17e} achieved_risk={:.17e}",
                    cal.rule.upper, cal.achieved_risk
                );
                cal.rule
            };
            out.push_str("share,trials,seed,power,power_stderr,mean_sample_size,mean_stderr,escalated,full_count\n");
            for (i, tally) in shares(&s)?.into_iter().enumerate() {
                let m = simulate(&s.method, &r, &scheme, &tally, trials, seed)?;
                let _ = writeln!(
                    out,
                    "{},{},{},{:.17e},{:.17e},{:.17e},{:.17e},{},{}",
                    tally.share_value(),
                    m.trials,
                    m.seed,
                    m.power,
                    m.power_stderr,
                    m.mean_sample_size,
                    m.mean_stderr,
                    m.escalated,
                    m.full_count
                );
                if i == 0 {
                    if let Some(p) = &pmf_output {
                        std::fs::write(p, m.to_csv())
                            .with_context(|| format!("writing {}", p.display()))?;
                    }
                }
            }
            write_out(None, &out)?;
        }
        Command::Session { rule, log } => {
            let config = if rule.method.is_some() || rule.config.is_some() {
                let s = RuleSettings::load(&rule)?;
                let scheme = s.scheme()?;
                let (r, cal) = s.rule()?;
                if let Some(cal) = cal {
                    eprintln!(
                        "calibrated upper threshold {} (maximum risk {:.6})",
                        cal.rule.upper, cal.achieved_risk
                    );
                }
                Some(ContestConfig {
                    scheme,
                    method: s.method,
                    rule: r,
                })
            } else {
                None
            };
            let stdin = std::io::stdin();
            session::run(
                config,
                log.as_deref(),
                stdin.lock(),
                std::io::stdout().lock(),
            )?;
        }
        Command::Serve {
            host,
            port,
            data_dir,
        } => {
            tracing_subscriber::fmt()
                .with_writer(std::io::stderr)
                .init();
            let store = Arc::new(pollaudit_service::Store::open(&data_dir)?);
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port)).await?;
                tracing::info!(
                    "listening on {} (data in {})",
                    listener.local_addr()?,
                    data_dir.display()
                );
                pollaudit_service::serve(listener, store).await?;
                anyhow::Ok(())
            })?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
