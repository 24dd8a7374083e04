//! Durable contest storage: one append-only JSON-lines log per contest plus
//! an index, replayed on startup.
//!
//! A contest log starts with a `created` entry followed by one `round` entry
//! per accepted round. Each append is fsynced before it is acknowledged. A
//! torn final line (from a crash mid-write) is truncated away on open; any
//! other damage is refused.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use pollaudit_core::engine::{AuditSession, ContestConfig, RoundRecord};
use pollaudit_core::SampleCounts;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::api::{
    ContestRequest, ContestView, RoundRequest, RoundResponse, RoundView, RuleSummary,
};
use crate::error::ApiError;

const INDEX_FILE: &str = "index.jsonl";
const CONTEST_DIR: &str = "contests";

#[derive(Clone, Debug, Serialize, Deserialize)]
struct IndexEntry {
    id: String,
    created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    idempotency_key: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "kebab-case")]
#[allow(clippy::large_enum_variant)] // one entry per line, never stored in bulk
enum LogEntry {
    Created {
        id: String,
        created_at: DateTime<Utc>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        idempotency_key: Option<String>,
        request: ContestRequest,
        config: ContestConfig,
        summary: RuleSummary,
    },
    Round {
        sequence_number: u64,
        record: RoundRecord,
    },
}

/// Immutable facts about a contest, fixed at creation.
#[derive(Clone, Debug)]
struct ContestMeta {
    id: String,
    created_at: DateTime<Utc>,
    request: ContestRequest,
    config: ContestConfig,
    summary: RuleSummary,
}

struct Writer {
    session: AuditSession,
    log: File,
}

/// A contest: a single writer guarded by a lock, and a snapshot that readers
/// take without waiting for the writer.
pub struct Contest {
    meta: ContestMeta,
    writer: Mutex<Writer>,
    snapshot: RwLock<Arc<ContestView>>,
}

impl Contest {
    pub fn view(&self) -> Arc<ContestView> {
        self.snapshot
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
    }

    pub fn config(&self) -> &ContestConfig {
        &self.meta.config
    }

    fn publish(&self, session: &AuditSession) {
        let view = Arc::new(render(&self.meta, session));
        *self.snapshot.write().unwrap_or_else(|e| e.into_inner()) = view;
    }
}

fn render(meta: &ContestMeta, session: &AuditSession) -> ContestView {
    let SampleCounts { n, winners } = session.counts();
    ContestView {
        id: meta.id.clone(),
        created_at: meta.created_at,
        scheme: meta.config.scheme,
        method: meta.config.method.clone(),
        summary: meta.summary.clone(),
        status: session.status(),
        n,
        winners,
        next_sequence_number: session.rounds().len() as u64 + 1,
        rounds: session.rounds().iter().map(RoundView::new).collect(),
    }
}

fn round_response(
    meta: &ContestMeta,
    session: &AuditSession,
    record: &RoundRecord,
) -> RoundResponse {
    RoundResponse {
        contest_id: meta.id.clone(),
        round: RoundView::new(record),
        status: session.status(),
    }
}

#[derive(Default)]
struct Registry {
    contests: HashMap<String, Arc<Contest>>,
    keys: HashMap<String, String>,
}

/// All contests under one data directory.
pub struct Store {
    dir: PathBuf,
    registry: RwLock<Registry>,
    /// Serializes index appends and idempotency-key registration.
    index: Mutex<File>,
}

impl Store {
    /// Opens (creating if needed) the data directory and replays every contest log.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, ApiError> {
        let dir = dir.into();
        fs::create_dir_all(dir.join(CONTEST_DIR))?;
        let index_path = dir.join(INDEX_FILE);
        let entries: Vec<IndexEntry> = read_log(&index_path)?;
        let mut registry = Registry::default();
        for entry in entries {
            let Some(contest) = load_contest(&dir, &entry)? else {
                tracing::warn!("contest {} has no creation entry; skipped", entry.id);
                continue;
            };
            if let Some(key) = entry.idempotency_key {
                registry.keys.insert(key, entry.id.clone());
            }
            registry.contests.insert(entry.id, Arc::new(contest));
        }
        let index = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&index_path)?;
        Ok(Self {
            dir,
            registry: RwLock::new(registry),
            index: Mutex::new(index),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn contest(&self, id: &str) -> Result<Arc<Contest>, ApiError> {
        self.registry
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .contests
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(id.to_string()))
    }

    pub fn contest_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .registry
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .contests
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }

    fn keyed(
        &self,
        key: &str,
        request: &ContestRequest,
    ) -> Result<Option<Arc<ContestView>>, ApiError> {
        let registry = self.registry.read().unwrap_or_else(|e| e.into_inner());
        let Some(id) = registry.keys.get(key) else {
            return Ok(None);
        };
        let contest = &registry.contests[id];
        if &contest.meta.request != request {
            return Err(ApiError::Conflict(format!(
                "idempotency key {key:?} was used for a different request"
            )));
        }
        Ok(Some(contest.view()))
    }

    /// Creates a contest, or returns the one already created under `idempotency_key`.
    /// Calibration runs here, so this may take a while.
    pub fn create(
        &self,
        request: ContestRequest,
        idempotency_key: Option<String>,
    ) -> Result<Arc<ContestView>, ApiError> {
        if let Some(key) = &idempotency_key {
            if let Some(view) = self.keyed(key, &request)? {
                return Ok(view);
            }
        }
        let (config, summary) = request.resolve()?;

        let mut index = self.index.lock().unwrap_or_else(|e| e.into_inner());
        // a concurrent request with the same key may have finished first
        if let Some(key) = &idempotency_key {
            if let Some(view) = self.keyed(key, &request)? {
                return Ok(view);
            }
        }
        let id = uuid::Uuid::new_v4().simple().to_string();
        let created_at = Utc::now();
        let meta = ContestMeta {
            id: id.clone(),
            created_at,
            request,
            config,
            summary,
        };
        let session = AuditSession::new(id.clone(), meta.config.clone())?;

        let path = contest_path(&self.dir, &id);
        let mut log = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(&path)?;
        let created = LogEntry::Created {
            id: id.clone(),
            created_at,
            idempotency_key: idempotency_key.clone(),
            request: meta.request.clone(),
            config: meta.config.clone(),
            summary: meta.summary.clone(),
        };
        append_line(&mut log, &created)?;
        sync_dir(&self.dir.join(CONTEST_DIR))?;
        append_line(
            &mut index,
            &IndexEntry {
                id: id.clone(),
                created_at,
                idempotency_key: idempotency_key.clone(),
            },
        )?;

        let contest = Arc::new(Contest {
            snapshot: RwLock::new(Arc::new(render(&meta, &session))),
            meta,
            writer: Mutex::new(Writer { session, log }),
        });
        let view = contest.view();
        let mut registry = self.registry.write().unwrap_or_else(|e| e.into_inner());
        if let Some(key) = idempotency_key {
            registry.keys.insert(key, id.clone());
        }
        registry.contests.insert(id, contest);
        Ok(view)
    }

    /// Appends a round. Retrying the last round with the same payload returns
    /// the original response without appending again.
    pub fn append_round(
        &self,
        id: &str,
        request: &RoundRequest,
    ) -> Result<RoundResponse, ApiError> {
        let contest = self.contest(id)?;
        let mut writer = contest.writer.lock().unwrap_or_else(|e| e.into_inner());
        let recorded = writer.session.rounds().len() as u64;
        if request.sequence_number == recorded && recorded > 0 {
            let last = writer.session.rounds().last().expect("at least one round");
            let same = last
                .interpretations
                .draws()
                .iter()
                .map(|&b| b as u8)
                .eq(request.interpretations.iter().copied());
            if same {
                return Ok(round_response(&contest.meta, &writer.session, last));
            }
            return Err(ApiError::Conflict(format!(
                "round {recorded} was already recorded with different interpretations"
            )));
        }
        if request.sequence_number != recorded + 1 {
            return Err(ApiError::Conflict(format!(
                "sequence number {} does not follow the last recorded round ({recorded}); expected {}",
                request.sequence_number,
                recorded + 1
            )));
        }
        if !writer.session.status().is_open() {
            return Err(ApiError::Gone(format!(
                "contest {id} is {}; no further rounds accepted",
                writer.session.status()
            )));
        }
        if request.interpretations.is_empty() {
            return Err(ApiError::BadRequest(
                "a round needs at least one ballot".into(),
            ));
        }

        let mut session = writer.session.clone();
        let outcome = session.append_round(&request.interpretations)?;
        let record = outcome.record.expect("nonempty round produces a record");
        append_line(
            &mut writer.log,
            &LogEntry::Round {
                sequence_number: request.sequence_number,
                record: record.clone(),
            },
        )?;
        writer.session = session;
        contest.publish(&writer.session);
        Ok(round_response(&contest.meta, &writer.session, &record))
    }
}

fn contest_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(CONTEST_DIR).join(format!("{id}.jsonl"))
}

fn load_contest(dir: &Path, entry: &IndexEntry) -> Result<Option<Contest>, ApiError> {
    let path = contest_path(dir, &entry.id);
    if !path.exists() {
        return Ok(None);
    }
    let entries: Vec<LogEntry> = read_log(&path)?;
    let mut entries = entries.into_iter();
    let Some(LogEntry::Created {
        id,
        created_at,
        request,
        config,
        summary,
        ..
    }) = entries.next()
    else {
        return Ok(None);
    };
    if id != entry.id {
        return Err(ApiError::Internal(format!(
            "log {} belongs to contest {id}",
            path.display()
        )));
    }
    let mut records = Vec::new();
    for e in entries {
        match e {
            LogEntry::Round {
                sequence_number,
                record,
            } if sequence_number == records.len() as u64 + 1 => records.push(record),
            _ => {
                return Err(ApiError::Internal(format!(
                    "log {} is out of sequence",
                    path.display()
                )))
            }
        }
    }
    let session = AuditSession::replay(id.clone(), config.clone(), &records)?;
    let meta = ContestMeta {
        id,
        created_at,
        request,
        config,
        summary,
    };
    let log = OpenOptions::new().append(true).open(&path)?;
    Ok(Some(Contest {
        snapshot: RwLock::new(Arc::new(render(&meta, &session))),
        meta,
        writer: Mutex::new(Writer { session, log }),
    }))
}

/// Reads a JSON-lines log. A torn final line is cut off the file; a bad
/// line anywhere else is an error.
fn read_log<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ApiError> {
    let mut bytes = Vec::new();
    match File::open(path) {
        Ok(mut f) => f.read_to_end(&mut bytes)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    let mut good = 0usize;
    while good < bytes.len() {
        let rest = &bytes[good..];
        let Some(end) = rest.iter().position(|&b| b == b'\n') else {
            break;
        };
        match serde_json::from_slice(&rest[..end]) {
            Ok(v) => out.push(v),
            Err(e) if good + end + 1 == bytes.len() => {
                tracing::warn!("{}: dropping unreadable final line: {e}", path.display());
                break;
            }
            Err(e) => {
                return Err(ApiError::Internal(format!(
                    "{}: corrupt entry at byte {good}: {e}",
                    path.display()
                )));
            }
        }
        good += end + 1;
    }
    if good < bytes.len() {
        tracing::warn!(
            "{}: truncating {} bytes of an incomplete entry",
            path.display(),
            bytes.len() - good
        );
        let f = OpenOptions::new().write(true).open(path)?;
        f.set_len(good as u64)?;
        f.sync_all()?;
    }
    Ok(out)
}

/// Appends one entry and syncs it. On failure the file is cut back to its
/// previous length so a half-written line cannot precede later entries.
fn append_line<T: Serialize>(file: &mut File, value: &T) -> Result<(), ApiError> {
    let mut line = serde_json::to_vec(value).map_err(|e| ApiError::Internal(e.to_string()))?;
    line.push(b'\n');
    let len = file.metadata()?.len();
    let written = file.write_all(&line).and_then(|_| file.sync_data());
    if let Err(e) = written {
        if let Err(undo) = file.set_len(len) {
            tracing::error!("cannot roll back a failed append: {undo}");
        }
        return Err(e.into());
    }
    Ok(())
}

fn sync_dir(dir: &Path) -> Result<(), ApiError> {
    #[cfg(unix)]
    File::open(dir)?.sync_all()?;
    #[cfg(not(unix))]
    let _ = dir;
    Ok(())
}
