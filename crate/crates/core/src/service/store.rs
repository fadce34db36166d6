//! Durable per-repository storage.
//!
//! Layout under `<state_dir>/<repo_id>/`:
//!
//! - `journal.jsonl`: append-only log of every accepted input (config
//!   changes, events with the `now` they were processed at, feedback,
//!   interactions). This is the recovery source.
//! - `notifications.jsonl`: append-only log of produced notifications and
//!   their feedback/interaction changes.
//! - `snapshot.json`: compacted state plus the journal position it covers.
//! - `rce.json`: the current RCE snapshot.
//!
//! Restoring loads the snapshot and replays the journal tail. Replay is
//! deterministic because each entry carries its own clock value.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::state::{Feedback, FeedbackChange, InteractionElement, Notification, RepositoryState, StateError};
use crate::config::RepoConfig;
use crate::event::{PullRequestEvent, Timestamp};

pub const JOURNAL_FILE: &str = "journal.jsonl";
pub const NOTIFICATIONS_FILE: &str = "notifications.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";
pub const RCE_FILE: &str = "rce.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{file}:{line}: corrupt entry: {message}")]
    Corrupt {
        file: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{file}:{line}: replay failed: {source}")]
    Replay {
        file: PathBuf,
        line: usize,
        #[source]
        source: StateError,
    },
    #[error(transparent)]
    State(#[from] StateError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One accepted input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum InputEntry {
    Config { config: RepoConfig },
    Event { now: Timestamp, event: PullRequestEvent },
    Feedback { id: String, verdict: Feedback, at: Timestamp },
    Interaction { id: String, element: InteractionElement },
}

#[derive(Serialize, Deserialize)]
struct JournalLine {
    seq: u64,
    #[serde(flatten)]
    entry: InputEntry,
}

/// One line of the notification journal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum OutputEntry {
    Notification { notification: Notification },
    Feedback { change: FeedbackChange },
    Interaction { id: String, element: InteractionElement, count: u64 },
}

#[derive(Serialize, Deserialize)]
struct SnapshotFile {
    journal_seq: u64,
    output_len: u64,
    config: RepoConfig,
    state: RepositoryState,
}

/// What an applied input produced.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Applied {
    pub notifications: Vec<Notification>,
    pub outputs: Vec<OutputEntry>,
    pub interaction_count: Option<u64>,
    pub feedback: Option<FeedbackChange>,
}

/// Applies one input to `state`. Shared by live processing and replay.
pub fn apply_entry(
    state: &mut RepositoryState,
    config: &mut RepoConfig,
    entry: &InputEntry,
) -> Result<Applied, StateError> {
    let mut applied = Applied::default();
    match entry {
        InputEntry::Config { config: next } => {
            if next.allow_list != config.allow_list {
                for pr in state.active_index.values_mut() {
                    pr.refilter(next);
                }
            }
            *config = next.clone();
        }
        InputEntry::Event { now, event } => {
            let produced = state.ingest(event, config, *now)?;
            applied.outputs = produced
                .iter()
                .cloned()
                .map(|notification| OutputEntry::Notification { notification })
                .collect();
            applied.notifications = produced;
        }
        InputEntry::Feedback { id, verdict, at } => {
            let change = state.record_feedback(id, *verdict, *at)?;
            applied.outputs.push(OutputEntry::Feedback { change: change.clone() });
            applied.feedback = Some(change);
        }
        InputEntry::Interaction { id, element } => {
            let count = state.record_interaction(id, *element)?;
            applied.outputs.push(OutputEntry::Interaction {
                id: id.clone(),
                element: *element,
                count,
            });
            applied.interaction_count = Some(count);
        }
    }
    Ok(applied)
}

/// State recovered from disk.
pub struct Restored {
    pub state: RepositoryState,
    pub config: RepoConfig,
    pub journal_seq: u64,
    /// Notification-journal lines covered by the snapshot.
    pub snapshot_output_len: u64,
    /// Outputs produced by replaying the journal tail.
    pub tail_outputs: Vec<OutputEntry>,
}

/// Rebuilds a repository's state from `repo_dir` without writing anything.
/// Fails on the first corrupt line, naming the file and line number.
pub fn restore(repo_dir: &Path, repo_id: &str) -> Result<Restored, StoreError> {
    let snapshot_path = repo_dir.join(SNAPSHOT_FILE);
    let (mut state, mut config, mut seq, snapshot_output_len) = if snapshot_path.exists() {
        let text = fs::read_to_string(&snapshot_path).map_err(io_err(&snapshot_path))?;
        let snap: SnapshotFile = serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
            file: snapshot_path.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
        (snap.state, snap.config, snap.journal_seq, snap.output_len)
    } else {
        let config = RepoConfig::default();
        (RepositoryState::new(repo_id, &config), config, 0, 0)
    };

    let journal_path = repo_dir.join(JOURNAL_FILE);
    let mut tail_outputs = Vec::new();
    for (line_no, line) in read_lines(&journal_path)? {
        let parsed: JournalLine = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
            file: journal_path.clone(),
            line: line_no,
            message: e.to_string(),
        })?;
        if parsed.seq <= seq {
            continue;
        }
        if parsed.seq != seq + 1 {
            return Err(StoreError::Corrupt {
                file: journal_path.clone(),
                line: line_no,
                message: format!("expected sequence {}, found {}", seq + 1, parsed.seq),
            });
        }
        let applied = apply_entry(&mut state, &mut config, &parsed.entry).map_err(|source| StoreError::Replay {
            file: journal_path.clone(),
            line: line_no,
            source,
        })?;
        tail_outputs.extend(applied.outputs);
        seq = parsed.seq;
    }
    Ok(Restored {
        state,
        config,
        journal_seq: seq,
        snapshot_output_len,
        tail_outputs,
    })
}

/// Reads complete lines. A final line without its newline is reported as
/// a truncated entry.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut reader = BufReader::new(file);
    let mut out = Vec::new();
    let mut line_no = 0;
    loop {
        let mut buf = String::new();
        let n = reader.read_line(&mut buf).map_err(io_err(path))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        if !buf.ends_with('\n') {
            return Err(StoreError::Corrupt {
                file: path.to_path_buf(),
                line: line_no,
                message: "truncated entry".into(),
            });
        }
        let trimmed = buf.trim_end();
        if trimmed.is_empty() {
            continue;
        }
        out.push((line_no, trimmed.to_string()));
    }
    Ok(out)
}

fn count_complete_lines(path: &Path) -> Result<(u64, Vec<u8>), StoreError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(io_err(path)(e)),
    };
    let complete = bytes.iter().filter(|&&b| b == b'\n').count() as u64;
    Ok((complete, bytes))
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(contents).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

struct Files {
    dir: PathBuf,
    journal: File,
    outputs: File,
}

/// A repository's state plus its on-disk journals. In-memory stores skip
/// all file I/O.
pub struct RepoStore {
    state: RepositoryState,
    config: RepoConfig,
    journal_seq: u64,
    output_len: u64,
    files: Option<Files>,
}

impl RepoStore {
    pub fn in_memory(repo_id: &str, config: RepoConfig) -> Self {
        Self {
            state: RepositoryState::new(repo_id, &config),
            config,
            journal_seq: 0,
            output_len: 0,
            files: None,
        }
    }

    /// Opens (or creates) `<state_dir>/<repo_id>`, restoring prior state.
    /// A config differing from the journaled one is recorded as a change.
    pub fn open(state_dir: &Path, repo_id: &str, config: RepoConfig) -> Result<Self, StoreError> {
        let dir = state_dir.join(repo_id);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let fresh = !dir.join(SNAPSHOT_FILE).exists() && !dir.join(JOURNAL_FILE).exists();
        let restored = restore(&dir, repo_id)?;

        // Bring the notification journal in line with the replayed tail:
        // keep the snapshot-covered prefix, then rewrite the tail.
        let out_path = dir.join(NOTIFICATIONS_FILE);
        let expected = restored.snapshot_output_len + restored.tail_outputs.len() as u64;
        let (complete, bytes) = count_complete_lines(&out_path)?;
        let ends_clean = bytes.last().is_none_or(|&b| b == b'\n');
        if complete < restored.snapshot_output_len || (complete > expected) {
            return Err(StoreError::Corrupt {
                file: out_path,
                line: complete as usize,
                message: format!("holds {complete} entries, journal accounts for {expected}"),
            });
        }
        if complete != expected || !ends_clean {
            let keep = nth_newline_end(&bytes, restored.snapshot_output_len);
            let mut contents = bytes[..keep].to_vec();
            for entry in &restored.tail_outputs {
                contents.extend(serde_json::to_vec(entry).expect("serializable"));
                contents.push(b'\n');
            }
            write_atomic(&out_path, &contents)?;
        }

        let journal_path = dir.join(JOURNAL_FILE);
        let journal = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&journal_path)
            .map_err(io_err(&journal_path))?;
        let outputs = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&out_path)
            .map_err(io_err(&out_path))?;

        let mut store = Self {
            state: restored.state,
            config: restored.config,
            journal_seq: restored.journal_seq,
            output_len: expected,
            files: Some(Files { dir, journal, outputs }),
        };
        if fresh || store.config != config {
            store.apply(InputEntry::Config { config })?;
        }
        Ok(store)
    }

    pub fn state(&self) -> &RepositoryState {
        &self.state
    }

    pub fn config(&self) -> &RepoConfig {
        &self.config
    }

    pub fn journal_seq(&self) -> u64 {
        self.journal_seq
    }

    pub fn dir(&self) -> Option<&Path> {
        self.files.as_ref().map(|f| f.dir.as_path())
    }

    /// Applies an input, then journals it and its outputs. Rejected inputs
    /// are not journaled.
    pub fn apply(&mut self, entry: InputEntry) -> Result<Applied, StoreError> {
        let refreshes_before = self.state.telemetry.rce_refreshes;
        let applied = apply_entry(&mut self.state, &mut self.config, &entry)?;
        self.journal_seq += 1;
        self.output_len += applied.outputs.len() as u64;
        if let Some(files) = self.files.as_mut() {
            let mut line = serde_json::to_vec(&JournalLine {
                seq: self.journal_seq,
                entry,
            })
            .expect("serializable");
            line.push(b'\n');
            let journal_path = files.dir.join(JOURNAL_FILE);
            files.journal.write_all(&line).map_err(io_err(&journal_path))?;

            if !applied.outputs.is_empty() {
                let mut buf = Vec::new();
                for out in &applied.outputs {
                    buf.extend(serde_json::to_vec(out).expect("serializable"));
                    buf.push(b'\n');
                }
                let out_path = files.dir.join(NOTIFICATIONS_FILE);
                files.outputs.write_all(&buf).map_err(io_err(&out_path))?;
            }
            if self.state.telemetry.rce_refreshes != refreshes_before {
                self.write_rce()?;
            }
        }
        Ok(applied)
    }

    pub fn ingest(&mut self, event: PullRequestEvent, now: Timestamp) -> Result<Vec<Notification>, StoreError> {
        Ok(self.apply(InputEntry::Event { now, event })?.notifications)
    }

    pub fn record_feedback(&mut self, id: &str, verdict: Feedback, at: Timestamp) -> Result<Notification, StoreError> {
        self.apply(InputEntry::Feedback {
            id: id.to_string(),
            verdict,
            at,
        })?;
        Ok(self.state.notification(id).cloned().expect("feedback applied"))
    }

    pub fn record_interaction(&mut self, id: &str, element: InteractionElement) -> Result<u64, StoreError> {
        let applied = self.apply(InputEntry::Interaction {
            id: id.to_string(),
            element,
        })?;
        Ok(applied.interaction_count.expect("interaction applied"))
    }

    pub fn set_config(&mut self, config: RepoConfig) -> Result<(), StoreError> {
        if config != self.config {
            self.apply(InputEntry::Config { config })?;
        }
        Ok(())
    }

    fn write_rce(&self) -> Result<(), StoreError> {
        if let Some(files) = &self.files {
            let body = serde_json::to_vec_pretty(&self.state.rce_snapshot).expect("serializable");
            write_atomic(&files.dir.join(RCE_FILE), &body)?;
        }
        Ok(())
    }

    /// Writes a compacted snapshot covering every journaled input.
    pub fn snapshot(&mut self) -> Result<(), StoreError> {
        let Some(files) = self.files.as_mut() else {
            return Ok(());
        };
        let journal_path = files.dir.join(JOURNAL_FILE);
        files.journal.sync_data().map_err(io_err(&journal_path))?;
        let snap = SnapshotFile {
            journal_seq: self.journal_seq,
            output_len: self.output_len,
            config: self.config.clone(),
            state: self.state.clone(),
        };
        let body = serde_json::to_vec(&snap).expect("serializable");
        write_atomic(&files.dir.join(SNAPSHOT_FILE), &body)?;
        self.write_rce()
    }
}

/// Byte offset just past the `n`th newline (0 when `n` is 0).
fn nth_newline_end(bytes: &[u8], n: u64) -> usize {
    if n == 0 {
        return 0;
    }
    let mut seen = 0;
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'\n' {
            seen += 1;
            if seen == n {
                return i + 1;
            }
        }
    }
    bytes.len()
}

/// Restores only the state of the repository stored in `repo_dir`.
pub fn restore_state(repo_dir: &Path) -> Result<RepositoryState, StoreError> {
    let repo_id = repo_dir
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default()
        .to_string();
    Ok(restore(repo_dir, &repo_id)?.state)
}
