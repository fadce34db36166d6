//! Ingestion, per-repository orchestration and notification tracking.
//!
//! Each repository is processed strictly in order behind its own lock;
//! different repositories proceed in parallel.

pub mod http;
pub mod state;
pub mod store;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{SubsecRound, Utc};
use serde::Serialize;
use thiserror::Error;

pub use state::{
    Feedback, FeedbackChange, InteractionElement, Notification, NotifiedCandidate, RepositoryState, SequencingError,
    StateError, Telemetry,
};
pub use store::{restore, restore_state, InputEntry, OutputEntry, RepoStore, StoreError};

use crate::config::RepoConfig;
use crate::event::{validate_event, EventError, PullRequestEvent, Timestamp};

/// Where "now" comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Clock {
    /// Replay: the event's own timestamp. Feedback uses the latest event time seen.
    EventTime,
    /// Live: the wall clock.
    Wall,
    Fixed(Timestamp),
}

impl Clock {
    fn now_for(&self, event: Option<&PullRequestEvent>) -> Timestamp {
        match (self, event) {
            (Clock::EventTime, Some(e)) => e.timestamp,
            (Clock::Fixed(t), _) => *t,
            _ => Utc::now().trunc_subsecs(0),
        }
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid event: {0}")]
    Validation(#[from] EventError),
    #[error("invalid repository id `{0}`")]
    InvalidRepo(String),
    #[error(transparent)]
    Store(StoreError),
}

impl From<StoreError> for ServiceError {
    fn from(e: StoreError) -> Self {
        ServiceError::Store(e)
    }
}

impl From<StateError> for ServiceError {
    fn from(e: StateError) -> Self {
        ServiceError::Store(StoreError::State(e))
    }
}

impl ServiceError {
    pub fn state_error(&self) -> Option<&StateError> {
        match self {
            ServiceError::Store(StoreError::State(e)) => Some(e),
            _ => None,
        }
    }
}

/// Repository ids double as directory names.
pub fn is_valid_repo_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id.len() <= 200
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

#[derive(Clone, Debug, Serialize)]
pub struct TelemetryReport {
    pub repo_id: String,
    pub events_processed: u64,
    pub events_rejected: u64,
    pub evaluations_run: u64,
    pub notifications_persisted: u64,
    pub notifications_emitted: u64,
    pub notifications_suppressed: u64,
    pub rce_refreshes: u64,
    pub active_prs: usize,
    pub rce_files: usize,
    pub interactions: u64,
    pub latency_samples: usize,
    pub latency_median_micros: Option<u64>,
    pub latency_p99_micros: Option<u64>,
    pub latency_max_micros: Option<u64>,
}

struct RepoSlot {
    store: Mutex<RepoStore>,
    rejected: AtomicU64,
}

pub struct Service {
    state_dir: Option<PathBuf>,
    config: RepoConfig,
    clock: Clock,
    repos: RwLock<BTreeMap<String, Arc<RepoSlot>>>,
}

impl Service {
    pub fn in_memory(config: RepoConfig, clock: Clock) -> Self {
        Self {
            state_dir: None,
            config,
            clock,
            repos: RwLock::new(BTreeMap::new()),
        }
    }

    /// Opens every repository already present under `state_dir`.
    pub fn open(state_dir: impl Into<PathBuf>, config: RepoConfig, clock: Clock) -> Result<Self, ServiceError> {
        let state_dir = state_dir.into();
        fs::create_dir_all(&state_dir).map_err(|source| StoreError::Io {
            path: state_dir.clone(),
            source,
        })?;
        let mut repos = BTreeMap::new();
        let entries = fs::read_dir(&state_dir).map_err(|source| StoreError::Io {
            path: state_dir.clone(),
            source,
        })?;
        for entry in entries.flatten() {
            let path = entry.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()).map(str::to_string) else {
                continue;
            };
            if !path.is_dir() || !is_valid_repo_id(&name) {
                continue;
            }
            let store = RepoStore::open(&state_dir, &name, config.clone())?;
            repos.insert(name, Arc::new(RepoSlot::new(store)));
        }
        Ok(Self {
            state_dir: Some(state_dir),
            config,
            clock,
            repos: RwLock::new(repos),
        })
    }

    pub fn state_dir(&self) -> Option<&Path> {
        self.state_dir.as_deref()
    }

    pub fn config(&self) -> &RepoConfig {
        &self.config
    }

    fn slot(&self, repo_id: &str) -> Option<Arc<RepoSlot>> {
        self.repos.read().expect("repo map lock").get(repo_id).cloned()
    }

    fn slot_or_create(&self, repo_id: &str) -> Result<Arc<RepoSlot>, ServiceError> {
        if let Some(slot) = self.slot(repo_id) {
            return Ok(slot);
        }
        if !is_valid_repo_id(repo_id) {
            return Err(ServiceError::InvalidRepo(repo_id.to_string()));
        }
        let mut repos = self.repos.write().expect("repo map lock");
        if let Some(slot) = repos.get(repo_id) {
            return Ok(slot.clone());
        }
        let store = match &self.state_dir {
            Some(dir) => RepoStore::open(dir, repo_id, self.config.clone())?,
            None => RepoStore::in_memory(repo_id, self.config.clone()),
        };
        let slot = Arc::new(RepoSlot::new(store));
        repos.insert(repo_id.to_string(), slot.clone());
        Ok(slot)
    }

    pub fn repo_ids(&self) -> Vec<String> {
        self.repos.read().expect("repo map lock").keys().cloned().collect()
    }

    /// Overrides the configuration of one repository.
    pub fn set_repo_config(&self, repo_id: &str, config: RepoConfig) -> Result<(), ServiceError> {
        let slot = self.slot_or_create(repo_id)?;
        let mut store = slot.store.lock().expect("repo lock");
        store.set_config(config)?;
        Ok(())
    }

    pub fn ingest(&self, event: PullRequestEvent) -> Result<Vec<Notification>, ServiceError> {
        let slot = self.slot_or_create(&event.repo_id)?;
        let now = self.clock.now_for(Some(&event));
        let mut store = slot.store.lock().expect("repo lock");
        store.ingest(event, now).inspect_err(|e| {
            if matches!(e, StoreError::State(StateError::Sequencing(_))) {
                slot.rejected.fetch_add(1, Ordering::Relaxed);
            }
        })
        .map_err(Into::into)
    }

    /// Validates a raw JSON event, then ingests it.
    pub fn ingest_json(&self, raw: &serde_json::Value) -> Result<Vec<Notification>, ServiceError> {
        let event = validate_event(raw)?;
        self.ingest(event)
    }

    fn find_notification(&self, id: &str) -> Result<Arc<RepoSlot>, ServiceError> {
        let repos: Vec<Arc<RepoSlot>> = self.repos.read().expect("repo map lock").values().cloned().collect();
        repos
            .into_iter()
            .find(|slot| slot.store.lock().expect("repo lock").state().notification(id).is_some())
            .ok_or_else(|| StateError::NotFound(id.to_string()).into())
    }

    fn feedback_time(&self, store: &RepoStore) -> Timestamp {
        match self.clock {
            Clock::EventTime => store
                .state()
                .active_index
                .values()
                .map(|p| p.last_updated)
                .chain(store.state().notifications.iter().map(|n| n.created_at))
                .max()
                .unwrap_or_else(|| Clock::Wall.now_for(None)),
            other => other.now_for(None),
        }
    }

    pub fn record_feedback(&self, id: &str, verdict: Feedback) -> Result<Notification, ServiceError> {
        let slot = self.find_notification(id)?;
        let mut store = slot.store.lock().expect("repo lock");
        let at = self.feedback_time(&store);
        Ok(store.record_feedback(id, verdict, at)?)
    }

    pub fn record_interaction(&self, id: &str, element: InteractionElement) -> Result<u64, ServiceError> {
        let slot = self.find_notification(id)?;
        let mut store = slot.store.lock().expect("repo lock");
        Ok(store.record_interaction(id, element)?)
    }

    /// Notifications created at or after `since`, oldest first.
    pub fn notifications(&self, repo_id: &str, since: Option<Timestamp>) -> Vec<Notification> {
        let Some(slot) = self.slot(repo_id) else {
            return Vec::new();
        };
        let store = slot.store.lock().expect("repo lock");
        store
            .state()
            .notifications
            .iter()
            .filter(|n| since.is_none_or(|s| n.created_at >= s))
            .cloned()
            .collect()
    }

    pub fn all_notifications(&self) -> Vec<Notification> {
        self.repo_ids()
            .iter()
            .flat_map(|r| self.notifications(r, None))
            .collect()
    }

    pub fn telemetry(&self, repo_id: &str) -> Option<TelemetryReport> {
        let slot = self.slot(repo_id)?;
        let store = slot.store.lock().expect("repo lock");
        let state = store.state();
        let t = &state.telemetry;
        Some(TelemetryReport {
            repo_id: repo_id.to_string(),
            events_processed: t.events_processed,
            events_rejected: slot.rejected.load(Ordering::Relaxed),
            evaluations_run: t.evaluations_run,
            notifications_persisted: t.notifications_persisted,
            notifications_emitted: t.notifications_emitted,
            notifications_suppressed: t.notifications_suppressed,
            rce_refreshes: t.rce_refreshes,
            active_prs: state.active_index.len(),
            rce_files: state.rce_snapshot.files.len(),
            interactions: state.notifications.iter().map(Notification::total_interactions).sum(),
            latency_samples: t.latency_micros.len(),
            latency_median_micros: t.latency_quantile(0.5),
            latency_p99_micros: t.latency_quantile(0.99),
            latency_max_micros: t.latency_quantile(1.0),
        })
    }

    /// A copy of one repository's state.
    pub fn repo_state(&self, repo_id: &str) -> Option<RepositoryState> {
        self.slot(repo_id)
            .map(|slot| slot.store.lock().expect("repo lock").state().clone())
    }

    pub fn snapshot_all(&self) -> Result<(), ServiceError> {
        let slots: Vec<Arc<RepoSlot>> = self.repos.read().expect("repo map lock").values().cloned().collect();
        for slot in slots {
            slot.store.lock().expect("repo lock").snapshot()?;
        }
        Ok(())
    }
}

impl RepoSlot {
    fn new(store: RepoStore) -> Self {
        Self {
            store: Mutex::new(store),
            rejected: AtomicU64::new(0),
        }
    }
}
