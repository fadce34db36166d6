//! Eligibility and exclusion rules: the file-type allow list, PR age and
//! size gates, hot-file exclusion, and candidate-pair exclusions.

use std::collections::{BTreeMap, BTreeSet};

use chrono::Duration;
use serde::{Deserialize, Serialize};

use crate::config::RepoConfig;
use crate::event::Timestamp;
use crate::model::ActivePullRequest;

/// Trailing window over which merges are counted for hot-file detection.
pub const HOT_FILE_WINDOW_DAYS: i64 = 30;

pub fn hot_file_window() -> Duration {
    Duration::days(HOT_FILE_WINDOW_DAYS)
}

/// Lowercase extension of the final path segment, with its leading dot.
pub fn file_extension(path: &str) -> Option<String> {
    let name = path.rsplit(['/', '\\']).next().unwrap_or(path);
    let dot = name.rfind('.')?;
    // dotfiles like `.gitignore` have no extension
    if dot == 0 || dot + 1 == name.len() {
        return None;
    }
    Some(name[dot..].to_lowercase())
}

pub fn is_allowed_file(path: &str, config: &RepoConfig) -> bool {
    file_extension(path).is_some_and(|ext| config.allow_list.contains(&ext))
}

pub fn allowed_files(files: &BTreeSet<String>, config: &RepoConfig) -> BTreeSet<String> {
    files
        .iter()
        .filter(|f| is_allowed_file(f, config))
        .cloned()
        .collect()
}

/// Merge timestamps of completed PRs, per path, over the trailing 30 days.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditFrequencyTracker {
    merges: BTreeMap<String, Vec<Timestamp>>,
}

impl EditFrequencyTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_merge<'a>(&mut self, files: impl IntoIterator<Item = &'a String>, merged_at: Timestamp) {
        for path in files {
            let stamps = self.merges.entry(path.clone()).or_default();
            let pos = stamps.partition_point(|t| *t <= merged_at);
            stamps.insert(pos, merged_at);
        }
    }

    /// Drops every timestamp at or before `now - 30 days`.
    pub fn prune(&mut self, now: Timestamp) {
        let cutoff = now - hot_file_window();
        self.merges.retain(|_, stamps| {
            let stale = stamps.partition_point(|t| *t <= cutoff);
            stamps.drain(..stale);
            !stamps.is_empty()
        });
    }

    /// Merges of `path` within `(now - 30 days, now]`.
    pub fn count_in_window(&self, path: &str, now: Timestamp) -> usize {
        let Some(stamps) = self.merges.get(path) else {
            return 0;
        };
        let cutoff = now - hot_file_window();
        let lo = stamps.partition_point(|t| *t <= cutoff);
        let hi = stamps.partition_point(|t| *t <= now);
        hi.saturating_sub(lo)
    }

    pub fn tracked_paths(&self) -> usize {
        self.merges.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Vec<Timestamp>)> {
        self.merges.iter()
    }
}

/// A limit of zero disables hot-file exclusion.
pub fn is_hot_file(path: &str, now: Timestamp, tracker: &EditFrequencyTracker, config: &RepoConfig) -> bool {
    config.hot_file_edit_limit > 0
        && tracker.count_in_window(path, now) >= config.hot_file_edit_limit as usize
}

/// The allow-listed files of `pr` with hot files removed.
pub fn effective_files(
    pr: &ActivePullRequest,
    now: Timestamp,
    tracker: &EditFrequencyTracker,
    config: &RepoConfig,
) -> BTreeSet<String> {
    pr.filtered_files
        .iter()
        .filter(|f| is_allowed_file(f, config) && !is_hot_file(f, now, tracker, config))
        .cloned()
        .collect()
}

/// Age and size gates shared by reference and candidate PRs.
pub fn passes_age_and_size(pr: &ActivePullRequest, now: Timestamp, config: &RepoConfig) -> bool {
    now - pr.created_at <= config.max_pr_age() && pr.raw_files.len() <= config.max_files_per_pr as usize
}

pub fn is_eligible_reference(
    pr: &ActivePullRequest,
    now: Timestamp,
    tracker: &EditFrequencyTracker,
    config: &RepoConfig,
) -> bool {
    pr.is_active()
        && passes_age_and_size(pr, now, config)
        && !effective_files(pr, now, tracker, config).is_empty()
}

pub fn is_candidate_pair(
    reference: &ActivePullRequest,
    other: &ActivePullRequest,
    now: Timestamp,
    config: &RepoConfig,
) -> bool {
    other.is_active()
        && other.pr_id != reference.pr_id
        && passes_age_and_size(other, now, config)
        && !(config.exclude_same_author && other.author == reference.author)
        && !other.interacting_users.contains(&reference.author)
}
