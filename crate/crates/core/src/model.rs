//! Aggregated pull-request state and scored candidate pairs.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::config::RepoConfig;
use crate::event::{PrId, PullRequestEvent, Timestamp};
use crate::filters::allowed_files;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrStatus {
    Active,
    Merged,
    Abandoned,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivePullRequest {
    pub repo_id: String,
    pub pr_id: PrId,
    pub author: String,
    pub created_at: Timestamp,
    pub last_updated: Timestamp,
    pub raw_files: BTreeSet<String>,
    /// `raw_files` restricted to the allow list.
    pub filtered_files: BTreeSet<String>,
    pub status: PrStatus,
    pub interacting_users: BTreeSet<String>,
}

impl ActivePullRequest {
    pub fn from_created(event: &PullRequestEvent, config: &RepoConfig) -> Self {
        Self {
            repo_id: event.repo_id.clone(),
            pr_id: event.pr_id,
            author: event.author.clone(),
            created_at: event.timestamp,
            last_updated: event.timestamp,
            filtered_files: allowed_files(&event.files, config),
            raw_files: event.files.clone(),
            status: PrStatus::Active,
            interacting_users: event.interacting_users.clone(),
        }
    }

    /// Applies an update: the event's file and user sets replace the current ones.
    pub fn apply_update(&mut self, event: &PullRequestEvent, config: &RepoConfig) {
        self.last_updated = event.timestamp;
        if !event.files.is_empty() {
            self.raw_files = event.files.clone();
            self.filtered_files = allowed_files(&self.raw_files, config);
        }
        self.interacting_users = event.interacting_users.clone();
    }

    /// Re-derives `filtered_files` after an allow-list change.
    pub fn refilter(&mut self, config: &RepoConfig) {
        self.filtered_files = allowed_files(&self.raw_files, config);
    }

    pub fn is_active(&self) -> bool {
        self.status == PrStatus::Active
    }
}

/// A (reference, active) pair that passed the threshold predicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub reference_pr: PrId,
    pub active_pr: PrId,
    /// Unrounded extent of overlap in percent.
    pub eoo: f64,
    pub overlap_files: BTreeSet<String>,
    pub rce_count: usize,
}

impl Candidate {
    /// EOO rounded to two decimals, for display.
    pub fn eoo_display(&self) -> f64 {
        crate::overlap::round2(self.eoo)
    }
}
