//! The situation storage: durable, queryable, subscribable store of
//! situations and their attached evaluation versions.
//!
//! Backed by an in-memory index plus an append-only log, one line per
//! commit. Commits are serialized through the single `&mut self` commit
//! stage; queries clone consistent snapshots; subscriptions are fed in commit
//! order through bounded queues (the committer waits when a queue is full).

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender, TryRecvError};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use situ_core::{areas_overlap, DataKey, EpochTime, GeoArea, ValidityInterval};

use crate::evaluate::SuitabilityResult;
use crate::fuse::Situation;

/// Subscription queue depth; puts block when a subscriber lags this far.
pub const SUBSCRIPTION_QUEUE_DEPTH: usize = 4096;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("empty-filter: query needs at least one filter")]
    EmptyFilter,
    #[error("unknown-situation: {0}")]
    UnknownSituation(String),
    #[error("conflicting-content: situation {0} already stored with different records")]
    ConflictingContent(String),
    #[error("corrupt-log at line {line}: {message}")]
    CorruptLog { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A situation with its attached evaluation versions (version n is
/// `evaluations[n-1]`; versions are append-only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredSituation {
    pub situation: Situation,
    pub evaluations: Vec<SuitabilityResult>,
    pub stored_at: EpochTime,
}

impl StoredSituation {
    pub fn latest_evaluation(&self) -> Option<(u64, &SuitabilityResult)> {
        self.evaluations
            .last()
            .map(|e| (self.evaluations.len() as u64, e))
    }
}

// Each log line is the serialized StoredSituation as of that commit; replay
// applies lines in order, so the last line per id wins.

/// Filter over stored situations. At least one filter must be present.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SituationQuery {
    pub area: Option<GeoArea>,
    pub interval: Option<ValidityInterval>,
    pub keys: Option<std::collections::BTreeSet<DataKey>>,
    #[serde(default)]
    pub with_evaluation: bool,
}

impl SituationQuery {
    /// Matches every situation (explicit all-time interval).
    pub fn all() -> Self {
        SituationQuery {
            interval: Some(ValidityInterval::new(EpochTime::ZERO, u64::MAX)),
            ..Default::default()
        }
    }

    pub fn is_unfiltered(&self) -> bool {
        self.area.is_none()
            && self.interval.is_none()
            && self.keys.is_none()
            && !self.with_evaluation
    }

    pub fn matches(&self, stored: &StoredSituation) -> bool {
        if let Some(area) = &self.area {
            if !areas_overlap(area, &stored.situation.area) {
                return false;
            }
        }
        if let Some(interval) = &self.interval {
            if !interval.intersects(&stored.situation.window) {
                return false;
            }
        }
        if let Some(keys) = &self.keys {
            if !keys
                .iter()
                .any(|k| stored.situation.records.contains_key(k))
            {
                return false;
            }
        }
        if self.with_evaluation && stored.evaluations.is_empty() {
            return false;
        }
        true
    }
}

/// Non-fatal replay observation (e.g. a truncated final line).
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayWarning {
    pub line: usize,
    pub message: String,
}

/// What a subscription reacts to: new situations, or evaluation commits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CommitKind {
    Put,
    Eval,
}

struct SubscriptionEntry {
    id: u64,
    filter: SituationQuery,
    tx: SyncSender<StoredSituation>,
}

/// Receiving end of a subscription. Dropping it (or calling
/// [`SituationStore::cancel`]) stops delivery.
pub struct SubscriptionHandle {
    id: u64,
    rx: Receiver<StoredSituation>,
}

impl SubscriptionHandle {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn try_recv(&self) -> Result<StoredSituation, TryRecvError> {
        self.rx.try_recv()
    }

    pub fn recv(&self) -> Option<StoredSituation> {
        self.rx.recv().ok()
    }

    pub fn drain(&self) -> Vec<StoredSituation> {
        let mut out = Vec::new();
        while let Ok(s) = self.rx.try_recv() {
            out.push(s);
        }
        out
    }
}

/// The situation store.
pub struct SituationStore {
    entries: BTreeMap<String, StoredSituation>,
    seq: u64,
    log: Option<LogWriter>,
    subscriptions: Vec<SubscriptionEntry>,
    next_subscription: u64,
}

struct LogWriter {
    path: PathBuf,
    writer: BufWriter<File>,
}

impl SituationStore {
    /// Volatile store without a log.
    pub fn in_memory() -> Self {
        SituationStore {
            entries: BTreeMap::new(),
            seq: 0,
            log: None,
            subscriptions: Vec::new(),
            next_subscription: 0,
        }
    }

    /// Create a fresh store logging to `path` (truncates any existing file).
    pub fn create<P: AsRef<Path>>(path: P) -> Result<Self, StoreError> {
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path.as_ref())?;
        let mut store = Self::in_memory();
        store.log = Some(LogWriter {
            path: path.as_ref().to_owned(),
            writer: BufWriter::new(file),
        });
        Ok(store)
    }

    /// Reconstruct a read-only store from an existing log.
    ///
    /// A final line cut short mid-write is skipped with a warning carrying
    /// its line number; corruption anywhere else is a hard error.
    pub fn replay<P: AsRef<Path>>(path: P) -> Result<(Self, Vec<ReplayWarning>), StoreError> {
        let mut text = String::new();
        File::open(path.as_ref())?.read_to_string(&mut text)?;
        let mut store = Self::in_memory();
        let warnings = store.apply_log(&text)?;
        Ok((store, warnings))
    }

    /// Replay an existing log (if any) and continue appending to it. A
    /// truncated final line is dropped from the file before appending
    /// resumes; a final line that is complete except for its newline is
    /// repaired in place.
    pub fn open<P: AsRef<Path>>(path: P) -> Result<(Self, Vec<ReplayWarning>), StoreError> {
        let path = path.as_ref();
        let mut text = String::new();
        if path.exists() {
            File::open(path)?.read_to_string(&mut text)?;
        }
        let mut store = Self::in_memory();
        let warnings = store.apply_log(&text)?;

        let mut good_bytes: u64 = complete_lines(&text).map(|l| l.len() as u64 + 1).sum();
        let mut repair_newline = false;
        if !text.is_empty() && !text.ends_with('\n') {
            let tail_start = text.rfind('\n').map(|i| i + 1).unwrap_or(0);
            if serde_json::from_str::<StoredSituation>(&text[tail_start..]).is_ok() {
                // apply_log accepted this entry; keep its bytes on disk too.
                good_bytes = text.len() as u64;
                repair_newline = true;
            }
        }
        let mut file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(false)
            .open(path)?;
        file.set_len(good_bytes)?;
        file.seek(SeekFrom::Start(good_bytes))?;
        if repair_newline {
            file.write_all(b"\n")?;
        }
        store.log = Some(LogWriter {
            path: path.to_owned(),
            writer: BufWriter::new(file),
        });
        Ok((store, warnings))
    }

    fn apply_log(&mut self, text: &str) -> Result<Vec<ReplayWarning>, StoreError> {
        let mut warnings = Vec::new();
        let lines: Vec<&str> = text.split('\n').collect();
        let ends_with_newline = text.is_empty() || text.ends_with('\n');
        // With a trailing newline the final split element is empty.
        let n = if ends_with_newline {
            lines.len().saturating_sub(1)
        } else {
            lines.len()
        };
        for (idx, line) in lines.iter().take(n).enumerate() {
            if line.is_empty() {
                continue;
            }
            let is_final = idx + 1 == n;
            match serde_json::from_str::<StoredSituation>(line) {
                Ok(stored) => {
                    self.seq += 1;
                    self.entries
                        .insert(stored.situation.situation_id.clone(), stored);
                }
                Err(e) if is_final && !ends_with_newline => {
                    warnings.push(ReplayWarning {
                        line: idx + 1,
                        message: format!("truncated final line skipped: {e}"),
                    });
                }
                Err(e) => {
                    return Err(StoreError::CorruptLog {
                        line: idx + 1,
                        message: e.to_string(),
                    });
                }
            }
        }
        Ok(warnings)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, situation_id: &str) -> Option<&StoredSituation> {
        self.entries.get(situation_id)
    }

    pub fn log_path(&self) -> Option<&Path> {
        self.log.as_ref().map(|l| l.path.as_path())
    }

    /// Store a situation. Idempotent on the situation id: re-putting
    /// identical content is a no-op, different content is a conflict.
    pub fn put_situation(
        &mut self,
        situation: Situation,
        stored_at: EpochTime,
    ) -> Result<String, StoreError> {
        let id = situation.situation_id.clone();
        if let Some(existing) = self.entries.get(&id) {
            if existing.situation.canonical_json() == situation.canonical_json() {
                return Ok(id);
            }
            return Err(StoreError::ConflictingContent(id));
        }
        let stored = StoredSituation {
            situation,
            evaluations: Vec::new(),
            stored_at,
        };
        self.entries.insert(id.clone(), stored.clone());
        self.commit(&stored, CommitKind::Put)?;
        Ok(id)
    }

    /// Append an evaluation as the next version, returning the version
    /// number (1-based). Prior versions stay readable.
    pub fn attach_evaluation(
        &mut self,
        situation_id: &str,
        result: SuitabilityResult,
    ) -> Result<u64, StoreError> {
        let stored = self
            .entries
            .get_mut(situation_id)
            .ok_or_else(|| StoreError::UnknownSituation(situation_id.to_owned()))?;
        stored.evaluations.push(result);
        let version = stored.evaluations.len() as u64;
        let snapshot = stored.clone();
        self.commit(&snapshot, CommitKind::Eval)?;
        Ok(version)
    }

    fn commit(&mut self, stored: &StoredSituation, kind: CommitKind) -> Result<(), StoreError> {
        self.seq += 1;
        if let Some(log) = &mut self.log {
            serde_json::to_writer(&mut log.writer, stored)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            log.writer.write_all(b"\n")?;
            log.writer.flush()?;
        }
        // Exactly-once delivery in commit order, while the commit lock is
        // held. Dead subscribers are pruned on send failure.
        let wanted = |filter: &SituationQuery| match kind {
            CommitKind::Put => !filter.with_evaluation,
            CommitKind::Eval => filter.with_evaluation,
        };
        self.subscriptions.retain(|sub| {
            if !wanted(&sub.filter) || !sub.filter.matches(stored) {
                return true;
            }
            sub.tx.send(stored.clone()).is_ok()
        });
        Ok(())
    }

    /// Situations matching the filter, ordered by window start, then area
    /// center latitude/longitude.
    pub fn query(&self, q: &SituationQuery) -> Result<Vec<StoredSituation>, StoreError> {
        if q.is_unfiltered() {
            return Err(StoreError::EmptyFilter);
        }
        let mut out: Vec<StoredSituation> = self
            .entries
            .values()
            .filter(|s| q.matches(s))
            .cloned()
            .collect();
        out.sort_by(|a, b| {
            let ka = (
                a.situation.window.start,
                a.situation.area.center(),
                a.situation.situation_id.clone(),
            );
            let kb = (
                b.situation.window.start,
                b.situation.area.center(),
                b.situation.situation_id.clone(),
            );
            ka.cmp(&kb)
        });
        Ok(out)
    }

    /// Subscribe to future commits matching `filter`: put commits by default,
    /// evaluation commits when `filter.with_evaluation` is set. Each matching
    /// commit is delivered exactly once, in commit order.
    pub fn subscribe(&mut self, filter: SituationQuery) -> Result<SubscriptionHandle, StoreError> {
        if filter.is_unfiltered() {
            return Err(StoreError::EmptyFilter);
        }
        let (tx, rx) = sync_channel(SUBSCRIPTION_QUEUE_DEPTH);
        self.next_subscription += 1;
        let id = self.next_subscription;
        self.subscriptions
            .push(SubscriptionEntry { id, filter, tx });
        Ok(SubscriptionHandle { id, rx })
    }

    pub fn cancel(&mut self, subscription_id: u64) {
        self.subscriptions.retain(|s| s.id != subscription_id);
    }

    /// Flush the log to disk.
    pub fn flush(&mut self) -> Result<(), StoreError> {
        if let Some(log) = &mut self.log {
            log.writer.flush()?;
            log.writer.get_ref().sync_all()?;
        }
        Ok(())
    }
}

fn complete_lines(text: &str) -> impl Iterator<Item = &str> {
    let complete_up_to = text.rfind('\n').map(|i| i + 1).unwrap_or(0);
    text[..complete_up_to].split('\n').filter(|l| !l.is_empty())
}
