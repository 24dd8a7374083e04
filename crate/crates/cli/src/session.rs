//! Interactive audit session over standard input, optionally logged to a
//! JSON-lines file that a later run resumes from.
//!
//! Each input line is one round: the interpretations as `0`/`1` characters,
//! optionally separated by spaces or commas. Blank lines and lines starting
//! with `#` are ignored. One JSON object is printed per round.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{bail, Context};
use pollaudit_core::engine::{AuditSession, ContestConfig, RoundRecord};
use serde::{Deserialize, Serialize};
use serde_json::json;

/// One line of the session log.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "kebab-case")]
enum LogLine {
    Config { config: ContestConfig },
    Round { record: RoundRecord },
}

/// Parses one round of interpretations.
pub fn parse_round(line: &str) -> anyhow::Result<Vec<u8>> {
    line.chars()
        .filter(|c| !c.is_whitespace() && *c != ',')
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            other => bail!("unexpected character '{other}'; rounds are sequences of 0 and 1"),
        })
        .collect()
}

fn load_log(path: &Path) -> anyhow::Result<(ContestConfig, Vec<RoundRecord>)> {
    let reader =
        BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut config = None;
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: LogLine =
            serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        match (entry, config.is_some()) {
            (LogLine::Config { config: c }, false) => config = Some(c),
            (LogLine::Round { record }, true) => records.push(record),
            _ => bail!(
                "{}:{}: the log must start with one config entry",
                path.display(),
                i + 1
            ),
        }
    }
    let config = config.with_context(|| format!("{} holds no config entry", path.display()))?;
    Ok((config, records))
}

fn append(log: &mut Option<File>, line: &LogLine) -> anyhow::Result<()> {
    if let Some(file) = log {
        let mut text = serde_json::to_string(line)?;
        text.push('\n');
        file.write_all(text.as_bytes())?;
        file.sync_data()?;
    }
    Ok(())
}

/// Runs the session. `config` may be `None` only when resuming from `log_path`;
/// when both are present they must agree.
pub fn run(
    config: Option<ContestConfig>,
    log_path: Option<&Path>,
    input: impl BufRead,
    mut out: impl Write,
) -> anyhow::Result<()> {
    let resumed = match log_path {
        Some(p) if p.exists() && std::fs::metadata(p)?.len() > 0 => Some(load_log(p)?),
        _ => None,
    };
    let mut log = match log_path {
        Some(p) => Some(
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .with_context(|| format!("opening {}", p.display()))?,
        ),
        None => None,
    };
    let mut session = match (resumed, config) {
        (Some((logged, records)), given) => {
            if given.as_ref().is_some_and(|g| *g != logged) {
                bail!("the settings given differ from the ones recorded in the log");
            }
            let session = AuditSession::replay("cli", logged, &records)?;
            writeln!(
                out,
                "{}",
                json!({ "resumed_rounds": records.len(), "status": session.status(), "n": session.counts().n, "Y": session.counts().winners })
            )?;
            session
        }
        (None, Some(config)) => {
            let session = AuditSession::new("cli", config.clone())?;
            append(&mut log, &LogLine::Config { config })?;
            session
        }
        (None, None) => bail!("no audit settings given and no log to resume"),
    };
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !session.status().is_open() {
            writeln!(
                out,
                "{}",
                json!({ "error": format!("the audit is closed ({})", session.status()) })
            )?;
            break;
        }
        let bits = match parse_round(line) {
            Ok(bits) => bits,
            Err(e) => {
                writeln!(out, "{}", json!({ "error": e.to_string() }))?;
                continue;
            }
        };
        match session.append_round(&bits) {
            Ok(outcome) => {
                if let Some(record) = outcome.record {
                    append(
                        &mut log,
                        &LogLine::Round {
                            record: record.clone(),
                        },
                    )?;
                    let mut view = serde_json::to_value(&record)?;
                    view.as_object_mut().map(|o| o.remove("interpretations"));
                    writeln!(out, "{view}")?;
                }
            }
            Err(e) => writeln!(out, "{}", json!({ "error": e.to_string() }))?,
        }
        out.flush()?;
    }
    Ok(())
}
