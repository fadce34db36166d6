//! Per-repository state and the pure operations that fold events and
//! feedback into it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RepoConfig;
use crate::detector::{evaluate, should_renotify};
use crate::event::{CloseReason, EventType, PrId, PullRequestEvent, Timestamp};
use crate::filters::{allowed_files, EditFrequencyTracker};
use crate::model::{ActivePullRequest, Candidate};
use crate::rce::{update_rce_list, PrInterval, RceList};

/// Latency samples kept per repository; older samples are discarded.
pub const MAX_LATENCY_SAMPLES: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    Active,
    Resolved,
    WontFix,
}

impl FromStr for Feedback {
    type Err = StateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "active" => Ok(Feedback::Active),
            "resolved" => Ok(Feedback::Resolved),
            "wont_fix" => Ok(Feedback::WontFix),
            other => Err(StateError::InvalidVerdict(other.to_string())),
        }
    }
}

impl fmt::Display for Feedback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Feedback::Active => "active",
            Feedback::Resolved => "resolved",
            Feedback::WontFix => "wont_fix",
        })
    }
}

impl Feedback {
    /// Verdicts move out of `active` and back; `resolved` and `wont_fix`
    /// never switch directly. Re-applying the current verdict is a no-op.
    pub fn can_become(self, next: Feedback) -> bool {
        self == next || self == Feedback::Active || next == Feedback::Active
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionElement {
    PrLink,
    FileLink,
    AuthorLink,
}

impl FromStr for InteractionElement {
    type Err = StateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pr_link" => Ok(InteractionElement::PrLink),
            "file_link" => Ok(InteractionElement::FileLink),
            "author_link" => Ok(InteractionElement::AuthorLink),
            other => Err(StateError::InvalidElement(other.to_string())),
        }
    }
}

/// A candidate as rendered to the reference PR's author.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NotifiedCandidate {
    #[serde(flatten)]
    pub candidate: Candidate,
    pub active_author: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Notification {
    pub id: String,
    pub repo_id: String,
    pub reference_pr: PrId,
    pub created_at: Timestamp,
    pub candidates: Vec<NotifiedCandidate>,
    pub feedback: Feedback,
    pub interactions: BTreeMap<InteractionElement, u64>,
    /// False when produced in shadow mode.
    pub emitted: bool,
}

impl Notification {
    pub fn candidate_ids(&self) -> BTreeSet<PrId> {
        self.candidates.iter().map(|c| c.candidate.active_pr).collect()
    }

    pub fn total_interactions(&self) -> u64 {
        self.interactions.values().sum()
    }
}

/// Counters exposed by the telemetry endpoint. Latency samples are
/// wall-clock measurements and do not take part in equality.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Telemetry {
    pub events_processed: u64,
    pub evaluations_run: u64,
    pub notifications_persisted: u64,
    pub notifications_emitted: u64,
    pub notifications_suppressed: u64,
    pub rce_refreshes: u64,
    pub latency_micros: Vec<u64>,
}

impl PartialEq for Telemetry {
    fn eq(&self, other: &Self) -> bool {
        self.events_processed == other.events_processed
            && self.evaluations_run == other.evaluations_run
            && self.notifications_persisted == other.notifications_persisted
            && self.notifications_emitted == other.notifications_emitted
            && self.notifications_suppressed == other.notifications_suppressed
            && self.rce_refreshes == other.rce_refreshes
    }
}

impl Telemetry {
    fn record_latency(&mut self, micros: u64) {
        if self.latency_micros.len() >= MAX_LATENCY_SAMPLES {
            let excess = self.latency_micros.len() + 1 - MAX_LATENCY_SAMPLES;
            self.latency_micros.drain(..excess);
        }
        self.latency_micros.push(micros);
    }

    /// Latency at quantile `q` in `[0, 1]` (nearest rank), in microseconds.
    pub fn latency_quantile(&self, q: f64) -> Option<u64> {
        if self.latency_micros.is_empty() {
            return None;
        }
        let mut sorted = self.latency_micros.clone();
        sorted.sort_unstable();
        let rank = ((q.clamp(0.0, 1.0) * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
        Some(sorted[rank - 1])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepositoryState {
    pub repo_id: String,
    pub active_index: BTreeMap<PrId, ActivePullRequest>,
    /// Every PR still relevant to the RCE window, open or closed.
    pub history: BTreeMap<PrId, PrInterval>,
    /// Ids of closed PRs that aged out of `history`.
    pub retired: BTreeSet<PrId>,
    pub rce_snapshot: RceList,
    pub tracker: EditFrequencyTracker,
    pub notifications: Vec<Notification>,
    pub telemetry: Telemetry,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SequencingError {
    #[error("PR {0} was already created")]
    DuplicateCreate(PrId),
    #[error("PR {0} has no prior `created` event")]
    UnknownPr(PrId),
    #[error("PR {0} is already closed")]
    AlreadyClosed(PrId),
    #[error("event for PR {pr_id} at {at} precedes its last event at {last}")]
    OutOfOrder {
        pr_id: PrId,
        at: Timestamp,
        last: Timestamp,
    },
    #[error("event for repository `{got}` sent to `{expected}`")]
    WrongRepository { expected: String, got: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StateError {
    #[error(transparent)]
    Sequencing(#[from] SequencingError),
    #[error("notification `{0}` not found")]
    NotFound(String),
    #[error("feedback cannot move from {from} to {to}")]
    InvalidTransition { from: Feedback, to: Feedback },
    #[error("unknown verdict `{0}`")]
    InvalidVerdict(String),
    #[error("unknown interaction element `{0}`")]
    InvalidElement(String),
}

/// The feedback change applied by [`RepositoryState::record_feedback`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackChange {
    pub id: String,
    pub from: Feedback,
    pub to: Feedback,
    pub at: Timestamp,
}

fn epoch() -> Timestamp {
    DateTime::<Utc>::UNIX_EPOCH
}

impl RepositoryState {
    pub fn new(repo_id: impl Into<String>, config: &RepoConfig) -> Self {
        let repo_id = repo_id.into();
        Self {
            rce_snapshot: RceList::empty(repo_id.clone(), epoch(), config.rce_window_days),
            repo_id,
            active_index: BTreeMap::new(),
            history: BTreeMap::new(),
            retired: BTreeSet::new(),
            tracker: EditFrequencyTracker::new(),
            notifications: Vec::new(),
            telemetry: Telemetry::default(),
        }
    }

    pub fn notification(&self, id: &str) -> Option<&Notification> {
        self.notifications.iter().find(|n| n.id == id)
    }

    fn notification_mut(&mut self, id: &str) -> Result<&mut Notification, StateError> {
        self.notifications
            .iter_mut()
            .find(|n| n.id == id)
            .ok_or_else(|| StateError::NotFound(id.to_string()))
    }

    /// Checks sequencing without touching state.
    fn check_sequence(&self, event: &PullRequestEvent) -> Result<(), SequencingError> {
        if event.repo_id != self.repo_id {
            return Err(SequencingError::WrongRepository {
                expected: self.repo_id.clone(),
                got: event.repo_id.clone(),
            });
        }
        let id = event.pr_id;
        let known = self.history.contains_key(&id) || self.retired.contains(&id);
        match event.event_type {
            EventType::Created if known || self.active_index.contains_key(&id) => {
                Err(SequencingError::DuplicateCreate(id))
            }
            EventType::Created => Ok(()),
            EventType::Updated | EventType::Closed => match self.active_index.get(&id) {
                Some(pr) if event.timestamp < pr.last_updated => Err(SequencingError::OutOfOrder {
                    pr_id: id,
                    at: event.timestamp,
                    last: pr.last_updated,
                }),
                Some(_) => Ok(()),
                None if known => Err(SequencingError::AlreadyClosed(id)),
                None => Err(SequencingError::UnknownPr(id)),
            },
        }
    }

    /// Folds one validated event into the state and runs detection for
    /// created/updated events. Returns the notifications persisted by this
    /// call. On error the state is unchanged.
    pub fn ingest(
        &mut self,
        event: &PullRequestEvent,
        config: &RepoConfig,
        now: Timestamp,
    ) -> Result<Vec<Notification>, StateError> {
        let started = Instant::now();
        self.check_sequence(event)?;
        let produced = match event.event_type {
            EventType::Created => {
                let pr = ActivePullRequest::from_created(event, config);
                self.history.insert(
                    pr.pr_id,
                    PrInterval {
                        pr_id: pr.pr_id,
                        author: pr.author.clone(),
                        created_at: pr.created_at,
                        closed_at: None,
                        files: pr.filtered_files.clone(),
                    },
                );
                self.active_index.insert(pr.pr_id, pr);
                self.detect(event.pr_id, config, now)
            }
            EventType::Updated => {
                let pr = self.active_index.get_mut(&event.pr_id).expect("sequencing checked");
                pr.apply_update(event, config);
                if let Some(h) = self.history.get_mut(&event.pr_id) {
                    h.files = pr.filtered_files.clone();
                }
                self.detect(event.pr_id, config, now)
            }
            EventType::Closed => {
                self.close(event, config);
                Vec::new()
            }
        };
        self.telemetry.events_processed += 1;
        self.telemetry.record_latency(started.elapsed().as_micros() as u64);
        Ok(produced)
    }

    fn close(&mut self, event: &PullRequestEvent, config: &RepoConfig) {
        let mut pr = self.active_index.remove(&event.pr_id).expect("sequencing checked");
        pr.last_updated = event.timestamp;
        if !event.files.is_empty() {
            pr.raw_files = event.files.clone();
            pr.filtered_files = allowed_files(&pr.raw_files, config);
        }
        if let Some(h) = self.history.get_mut(&event.pr_id) {
            h.closed_at = Some(event.timestamp);
            h.files = pr.filtered_files.clone();
        }
        if event.close_reason == Some(CloseReason::Merged) {
            self.tracker.record_merge(&pr.filtered_files, event.timestamp);
        }
        self.tracker.prune(event.timestamp);
    }

    fn refresh_rces_if_stale(&mut self, config: &RepoConfig, now: Timestamp) {
        if !self.rce_snapshot.needs_refresh(now, config) {
            return;
        }
        let history: Vec<PrInterval> = self.history.values().cloned().collect();
        let (fresh, _delta) = update_rce_list(&self.rce_snapshot, &history, now, config);
        self.rce_snapshot = fresh;
        self.telemetry.rce_refreshes += 1;
        self.prune_history(config, now);
    }

    /// Closed PRs created before the RCE window can never re-enter it.
    fn prune_history(&mut self, config: &RepoConfig, now: Timestamp) {
        let cutoff = now - Duration::days(i64::from(config.rce_window_days));
        let stale: Vec<PrId> = self
            .history
            .values()
            .filter(|h| h.closed_at.is_some() && h.created_at <= cutoff)
            .map(|h| h.pr_id)
            .collect();
        for id in stale {
            self.history.remove(&id);
            self.retired.insert(id);
        }
    }

    fn detect(&mut self, reference: PrId, config: &RepoConfig, now: Timestamp) -> Vec<Notification> {
        self.refresh_rces_if_stale(config, now);
        let result = evaluate(
            reference,
            self.active_index.values(),
            &self.rce_snapshot,
            &self.tracker,
            now,
            config,
        )
        .expect("reference was just indexed");
        self.telemetry.evaluations_run += 1;
        if result.candidates.is_empty() {
            return Vec::new();
        }

        let previous: Vec<BTreeSet<PrId>> = self
            .notifications
            .iter()
            .filter(|n| n.reference_pr == reference)
            .map(Notification::candidate_ids)
            .collect();
        if !should_renotify(&previous, &result.candidates) {
            self.telemetry.notifications_suppressed += 1;
            return Vec::new();
        }

        let candidates = result
            .candidates
            .into_iter()
            .map(|candidate| NotifiedCandidate {
                active_author: self
                    .active_index
                    .get(&candidate.active_pr)
                    .map(|p| p.author.clone())
                    .unwrap_or_default(),
                candidate,
            })
            .collect();
        let notification = Notification {
            id: format!("{}-{}-{}", self.repo_id, reference, self.notifications.len() + 1),
            repo_id: self.repo_id.clone(),
            reference_pr: reference,
            created_at: now,
            candidates,
            feedback: Feedback::Active,
            interactions: BTreeMap::new(),
            emitted: !config.shadow_mode,
        };
        self.telemetry.notifications_persisted += 1;
        if notification.emitted {
            self.telemetry.notifications_emitted += 1;
        }
        self.notifications.push(notification.clone());
        vec![notification]
    }

    pub fn record_feedback(&mut self, id: &str, verdict: Feedback, at: Timestamp) -> Result<FeedbackChange, StateError> {
        let n = self.notification_mut(id)?;
        if !n.feedback.can_become(verdict) {
            return Err(StateError::InvalidTransition {
                from: n.feedback,
                to: verdict,
            });
        }
        let change = FeedbackChange {
            id: id.to_string(),
            from: n.feedback,
            to: verdict,
            at,
        };
        n.feedback = verdict;
        Ok(change)
    }

    /// Increments the element's click counter and returns its new value.
    pub fn record_interaction(&mut self, id: &str, element: InteractionElement) -> Result<u64, StateError> {
        let n = self.notification_mut(id)?;
        let counter = n.interactions.entry(element).or_insert(0);
        *counter += 1;
        Ok(*counter)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::parse_timestamp;

    fn t(s: &str) -> Timestamp {
        parse_timestamp(s).unwrap()
    }

    fn ev(pr: u64, kind: EventType, at: &str, author: &str, files: &[&str]) -> PullRequestEvent {
        PullRequestEvent {
            repo_id: "repo".into(),
            pr_id: pr,
            event_type: kind,
            timestamp: t(at),
            author: author.into(),
            files: files.iter().map(|s| s.to_string()).collect(),
            title: String::new(),
            commit_messages: Vec::new(),
            interacting_users: BTreeSet::new(),
            close_reason: if kind == EventType::Closed {
                Some(CloseReason::Merged)
            } else {
                None
            },
        }
    }

    fn ingest(state: &mut RepositoryState, cfg: &RepoConfig, e: PullRequestEvent) -> Vec<Notification> {
        let now = e.timestamp;
        state.ingest(&e, cfg, now).unwrap()
    }

    #[test]
    fn overlapping_prs_notify_once() {
        let cfg = RepoConfig::default();
        let mut s = RepositoryState::new("repo", &cfg);
        ingest(&mut s, &cfg, ev(1, EventType::Created, "2020-03-01T00:00:00Z", "bob", &["a.cs", "b.cs"]));
        let out = ingest(
            &mut s,
            &cfg,
            ev(2, EventType::Created, "2020-03-02T00:00:00Z", "alice", &["a.cs", "b.cs", "c.cs"]),
        );
        assert_eq!(out.len(), 1);
        let n = &out[0];
        assert_eq!(n.reference_pr, 2);
        assert_eq!(n.candidate_ids(), [1].into_iter().collect());
        assert_eq!(n.candidates[0].active_author, "bob");
        assert!(n.emitted);
        assert_eq!(n.id, "repo-2-1");

        // same update again: suppressed
        let again = ingest(
            &mut s,
            &cfg,
            ev(2, EventType::Updated, "2020-03-02T01:00:00Z", "alice", &["a.cs", "b.cs", "c.cs"]),
        );
        assert!(again.is_empty());
        assert_eq!(s.telemetry.notifications_suppressed, 1);
    }

    #[test]
    fn shadow_mode_persists_without_emitting() {
        let cfg = RepoConfig {
            shadow_mode: true,
            ..RepoConfig::default()
        };
        let mut s = RepositoryState::new("repo", &cfg);
        ingest(&mut s, &cfg, ev(1, EventType::Created, "2020-03-01T00:00:00Z", "bob", &["a.cs", "b.cs"]));
        let out = ingest(&mut s, &cfg, ev(2, EventType::Created, "2020-03-01T02:00:00Z", "alice", &["a.cs", "b.cs"]));
        assert_eq!(out.len(), 1);
        assert!(!out[0].emitted);
        assert_eq!(s.notifications.len(), 1);
        assert_eq!(s.telemetry.notifications_emitted, 0);
    }

    #[test]
    fn stale_reference_update_produces_nothing() {
        let cfg = RepoConfig::default();
        let mut s = RepositoryState::new("repo", &cfg);
        ingest(&mut s, &cfg, ev(1, EventType::Created, "2020-03-01T00:00:00Z", "bob", &["a.cs", "b.cs"]));
        ingest(&mut s, &cfg, ev(2, EventType::Created, "2020-03-01T00:00:00Z", "alice", &["x.cs"]));
        ingest(&mut s, &cfg, ev(3, EventType::Created, "2020-04-05T00:00:00Z", "carol", &["a.cs", "b.cs"]));
        let out = ingest(&mut s, &cfg, ev(2, EventType::Updated, "2020-04-05T00:00:00Z", "alice", &["a.cs", "b.cs"]));
        assert!(out.is_empty());
    }

    #[test]
    fn sequencing_errors_leave_state_unchanged() {
        let cfg = RepoConfig::default();
        let mut s = RepositoryState::new("repo", &cfg);
        let before = s.clone();
        let e = ev(5, EventType::Updated, "2020-03-01T00:00:00Z", "bob", &["a.cs"]);
        assert_eq!(
            s.ingest(&e, &cfg, e.timestamp).unwrap_err(),
            StateError::Sequencing(SequencingError::UnknownPr(5))
        );
        assert_eq!(s.active_index, before.active_index);

        ingest(&mut s, &cfg, ev(5, EventType::Created, "2020-03-01T00:00:00Z", "bob", &["a.cs"]));
        let dup = ev(5, EventType::Created, "2020-03-02T00:00:00Z", "bob", &["a.cs"]);
        assert!(matches!(
            s.ingest(&dup, &cfg, dup.timestamp),
            Err(StateError::Sequencing(SequencingError::DuplicateCreate(5)))
        ));
        let early = ev(5, EventType::Updated, "2020-02-01T00:00:00Z", "bob", &["a.cs"]);
        assert!(matches!(
            s.ingest(&early, &cfg, early.timestamp),
            Err(StateError::Sequencing(SequencingError::OutOfOrder { .. }))
        ));
        ingest(&mut s, &cfg, ev(5, EventType::Closed, "2020-03-03T00:00:00Z", "bob", &[]));
        let reopen = ev(5, EventType::Created, "2020-03-04T00:00:00Z", "bob", &["a.cs"]);
        assert!(s.ingest(&reopen, &cfg, reopen.timestamp).is_err());
        let late = ev(5, EventType::Updated, "2020-03-04T00:00:00Z", "bob", &["a.cs"]);
        assert!(matches!(
            s.ingest(&late, &cfg, late.timestamp),
            Err(StateError::Sequencing(SequencingError::AlreadyClosed(5)))
        ));
        assert_eq!(s.telemetry.events_processed, 2);
    }

    #[test]
    fn merges_feed_the_tracker() {
        let cfg = RepoConfig::default();
        let mut s = RepositoryState::new("repo", &cfg);
        ingest(&mut s, &cfg, ev(1, EventType::Created, "2020-03-01T00:00:00Z", "bob", &["a.cs", "b.ini"]));
        ingest(&mut s, &cfg, ev(1, EventType::Closed, "2020-03-02T00:00:00Z", "bob", &[]));
        assert!(s.active_index.is_empty());
        assert_eq!(s.tracker.count_in_window("a.cs", t("2020-03-02T00:00:00Z")), 1);
        assert_eq!(s.tracker.count_in_window("b.ini", t("2020-03-02T00:00:00Z")), 0);
    }

    #[test]
    fn feedback_and_interactions() {
        let cfg = RepoConfig::default();
        let mut s = RepositoryState::new("repo", &cfg);
        ingest(&mut s, &cfg, ev(1, EventType::Created, "2020-03-01T00:00:00Z", "bob", &["a.cs", "b.cs"]));
        ingest(&mut s, &cfg, ev(2, EventType::Created, "2020-03-01T02:00:00Z", "alice", &["a.cs", "b.cs"]));
        let id = s.notifications[0].id.clone();
        let at = t("2020-03-02T00:00:00Z");

        s.record_feedback(&id, Feedback::Resolved, at).unwrap();
        assert_eq!(s.notification(&id).unwrap().feedback, Feedback::Resolved);
        assert_eq!(
            s.record_feedback(&id, Feedback::WontFix, at).unwrap_err(),
            StateError::InvalidTransition {
                from: Feedback::Resolved,
                to: Feedback::WontFix
            }
        );
        s.record_feedback(&id, Feedback::Active, at).unwrap();
        s.record_feedback(&id, Feedback::WontFix, at).unwrap();
        assert_eq!(s.notification(&id).unwrap().feedback, Feedback::WontFix);
        assert!(matches!(
            s.record_feedback("nope", Feedback::Resolved, at),
            Err(StateError::NotFound(_))
        ));

        assert_eq!(s.record_interaction(&id, InteractionElement::PrLink).unwrap(), 1);
        s.record_interaction(&id, InteractionElement::FileLink).unwrap();
        s.record_interaction(&id, InteractionElement::AuthorLink).unwrap();
        assert_eq!(s.notification(&id).unwrap().total_interactions(), 3);
        assert!(s.record_interaction("nope", InteractionElement::PrLink).is_err());
        assert!("share_link".parse::<InteractionElement>().is_err());
        assert!("maybe".parse::<Feedback>().is_err());
    }

    #[test]
    fn latency_quantiles() {
        let mut t = Telemetry::default();
        assert_eq!(t.latency_quantile(0.5), None);
        for v in 1..=100 {
            t.record_latency(v);
        }
        assert_eq!(t.latency_quantile(0.5), Some(50));
        assert_eq!(t.latency_quantile(0.99), Some(99));
        assert_eq!(t.latency_quantile(1.0), Some(100));
    }
}
