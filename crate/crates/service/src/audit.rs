//! Append-only JSON-lines audit log and the statistics folded from it.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::service::{ChallengeKind, StoredAnswer};
use crate::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    /// Carries what a restarted server needs to regenerate and grade the
    /// challenge.
    Issued {
        challenge_id: String,
        kind: ChallengeKind,
        seed: u64,
        ttl_seconds: u64,
        attempts: u32,
        answer: StoredAnswer,
    },
    AssetFetched,
    Submitted {
        passed: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        similarity: Option<f64>,
        latency_ms: u64,
    },
    Expired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub timestamp: DateTime<Utc>,
    pub token: String,
    pub event: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_tag: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub issued: u64,
    pub passed: u64,
    pub failed: u64,
    pub expired: u64,
    /// Over failed free-text submissions; choice answers carry no similarity.
    pub mean_similarity_of_failures: Option<f64>,
}

/// Half-open time range `[since, until)`; open ends are unbounded.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Window {
    pub since: Option<DateTime<Utc>>,
    pub until: Option<DateTime<Utc>>,
}

impl Window {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.since.is_none_or(|s| t >= s) && self.until.is_none_or(|u| t < u)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Tally {
    issued: u64,
    passed: u64,
    failed: u64,
    expired: u64,
    failure_similarity_sum: f64,
    failures_with_similarity: u64,
}

impl Tally {
    fn apply(&mut self, event: &EventKind) {
        match event {
            EventKind::Issued { .. } => self.issued += 1,
            EventKind::AssetFetched => {}
            EventKind::Submitted { passed: true, .. } => self.passed += 1,
            EventKind::Submitted { passed: false, similarity, .. } => {
                self.failed += 1;
                if let Some(s) = similarity {
                    self.failure_similarity_sum += s;
                    self.failures_with_similarity += 1;
                }
            }
            EventKind::Expired => self.expired += 1,
        }
    }

    fn stats(&self) -> Stats {
        Stats {
            issued: self.issued,
            passed: self.passed,
            failed: self.failed,
            expired: self.expired,
            mean_similarity_of_failures: (self.failures_with_similarity > 0)
                .then(|| self.failure_similarity_sum / self.failures_with_similarity as f64),
        }
    }
}

/// Folds `events` falling inside `window`.
pub fn fold_stats<'a>(events: impl IntoIterator<Item = &'a AuditEvent>, window: Window) -> Stats {
    let mut tally = Tally::default();
    for e in events.into_iter().filter(|e| window.contains(e.timestamp)) {
        tally.apply(&e.event);
    }
    tally.stats()
}

/// Reads every event from a log file. A missing file is an empty log.
pub fn read_events(path: &Path) -> Result<Vec<AuditEvent>, ServiceError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(ServiceError::audit(path, e)),
    };
    let mut events = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ServiceError::audit(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line)
            .map_err(|e| ServiceError::Config(format!("{} line {}: {e}", path.display(), i + 1)))?;
        events.push(event);
    }
    Ok(events)
}

struct Writer {
    out: BufWriter<File>,
    last: Option<DateTime<Utc>>,
    tally: Tally,
}

/// Single writer for the audit file, keeping running totals as it goes.
pub struct AuditLog {
    path: PathBuf,
    inner: Mutex<Writer>,
}

impl AuditLog {
    /// Opens `path` for appending. Existing events seed the running totals;
    /// they are returned for the caller to rebuild its own state.
    pub fn open(path: &Path) -> Result<(Self, Vec<AuditEvent>), ServiceError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| ServiceError::audit(parent, e))?;
        }
        let existing = read_events(path)?;
        let mut tally = Tally::default();
        for e in &existing {
            tally.apply(&e.event);
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| ServiceError::audit(path, e))?;
        let writer = Writer { out: BufWriter::new(file), last: existing.iter().map(|e| e.timestamp).max(), tally };
        Ok((Self { path: path.to_path_buf(), inner: Mutex::new(writer) }, existing))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends one event and flushes. Timestamps never go backwards: an
    /// event stamped earlier than its predecessor takes the predecessor's
    /// time.
    pub fn append(
        &self,
        now: DateTime<Utc>,
        token: &str,
        event: EventKind,
        client_tag: Option<&str>,
    ) -> Result<AuditEvent, ServiceError> {
        let mut w = self.inner.lock();
        let timestamp = w.last.map_or(now, |last| last.max(now));
        let record =
            AuditEvent { timestamp, token: token.to_owned(), event, client_tag: client_tag.map(str::to_owned) };
        let line = serde_json::to_string(&record).map_err(|e| ServiceError::Config(e.to_string()))?;
        writeln!(w.out, "{line}").and_then(|_| w.out.flush()).map_err(|e| ServiceError::audit(&self.path, e))?;
        w.last = Some(timestamp);
        w.tally.apply(&record.event);
        Ok(record)
    }

    /// Running totals since the log was created.
    pub fn live_stats(&self) -> Stats {
        self.inner.lock().tally.stats()
    }

    /// Re-reads the file and folds the events inside `window`.
    pub fn stats(&self, window: Window) -> Result<Stats, ServiceError> {
        let _guard = self.inner.lock();
        Ok(fold_stats(&read_events(&self.path)?, window))
    }
}
