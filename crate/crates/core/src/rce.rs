//! Rarely Concurrently Edited (RCE) files.
//!
//! A file is an RCE when, over the trailing window, it was edited by at
//! least one PR and never by two PRs whose active spans intersect. Spans are
//! closed intervals, so PRs touching at a single instant overlap.

use std::collections::{BTreeMap, BTreeSet};

use chrono::Duration;
use serde::{Deserialize, Serialize};

use crate::config::{RceConcurrency, RepoConfig};
use crate::event::{EventType, PrId, PullRequestEvent, Timestamp};
use crate::filters::is_allowed_file;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RceList {
    pub repo_id: String,
    pub built_at: Timestamp,
    pub window_days: u32,
    pub files: BTreeSet<String>,
}

impl RceList {
    pub fn empty(repo_id: impl Into<String>, built_at: Timestamp, window_days: u32) -> Self {
        Self {
            repo_id: repo_id.into(),
            built_at,
            window_days,
            files: BTreeSet::new(),
        }
    }

    pub fn needs_refresh(&self, now: Timestamp, config: &RepoConfig) -> bool {
        now - self.built_at >= Duration::days(i64::from(config.rce_refresh_days))
    }

    pub fn contains(&self, path: &str) -> bool {
        self.files.contains(path)
    }
}

/// The active span of one PR and the files it edits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrInterval {
    pub pr_id: PrId,
    pub author: String,
    pub created_at: Timestamp,
    /// `None` while the PR is still open; treated as the build instant.
    pub closed_at: Option<Timestamp>,
    pub files: BTreeSet<String>,
}

impl PrInterval {
    fn span_at(&self, now: Timestamp) -> (Timestamp, Timestamp) {
        let end = match self.closed_at {
            Some(c) if c <= now => c,
            _ => now,
        };
        (self.created_at, end.max(self.created_at))
    }
}

/// Files added and removed by an incremental refresh.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RceDelta {
    pub added: BTreeSet<String>,
    pub removed: BTreeSet<String>,
}

struct WindowScan {
    edited: BTreeSet<String>,
    concurrent: BTreeSet<String>,
}

fn in_window(pr: &PrInterval, now: Timestamp, config: &RepoConfig) -> bool {
    let start = now - Duration::days(i64::from(config.rce_window_days));
    pr.created_at > start && pr.created_at <= now
}

/// For spans sorted by start, flags each span that intersects another one.
fn overlapping_flags(spans: &[(Timestamp, Timestamp)]) -> Vec<bool> {
    let mut flags = vec![false; spans.len()];
    let mut max_end: Option<Timestamp> = None;
    for (i, &(start, end)) in spans.iter().enumerate() {
        if max_end.is_some_and(|m| start <= m) {
            flags[i] = true;
        }
        if spans.get(i + 1).is_some_and(|next| next.0 <= end) {
            flags[i] = true;
        }
        max_end = Some(max_end.map_or(end, |m| m.max(end)));
    }
    flags
}

fn scan_window(history: &[PrInterval], now: Timestamp, config: &RepoConfig) -> WindowScan {
    let windowed: Vec<&PrInterval> = history.iter().filter(|pr| in_window(pr, now, config)).collect();
    let mut edited = BTreeSet::new();
    let mut concurrent = BTreeSet::new();

    match config.rce_concurrency {
        RceConcurrency::File => {
            let mut per_file: BTreeMap<&str, Vec<(Timestamp, Timestamp)>> = BTreeMap::new();
            for pr in &windowed {
                let span = pr.span_at(now);
                for f in pr.files.iter().filter(|f| is_allowed_file(f, config)) {
                    per_file.entry(f.as_str()).or_default().push(span);
                }
            }
            for (file, mut spans) in per_file {
                edited.insert(file.to_string());
                if spans.len() < 2 {
                    continue;
                }
                spans.sort();
                if overlapping_flags(&spans).into_iter().any(|f| f) {
                    concurrent.insert(file.to_string());
                }
            }
        }
        RceConcurrency::PullRequest => {
            let mut ordered: Vec<((Timestamp, Timestamp), &PrInterval)> =
                windowed.iter().map(|pr| (pr.span_at(now), *pr)).collect();
            ordered.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.pr_id.cmp(&b.1.pr_id)));
            let spans: Vec<_> = ordered.iter().map(|(s, _)| *s).collect();
            let flags = overlapping_flags(&spans);
            for ((_, pr), overlapped) in ordered.iter().zip(flags) {
                for f in pr.files.iter().filter(|f| is_allowed_file(f, config)) {
                    edited.insert(f.clone());
                    if overlapped {
                        concurrent.insert(f.clone());
                    }
                }
            }
        }
    }
    WindowScan { edited, concurrent }
}

/// Builds the RCE list from PRs created within `(now - window, now]`.
/// PRs outside the window are ignored, so callers may pass a superset.
pub fn build_rce_list(repo_id: &str, history: &[PrInterval], now: Timestamp, config: &RepoConfig) -> RceList {
    let scan = scan_window(history, now, config);
    RceList {
        repo_id: repo_id.to_string(),
        built_at: now,
        window_days: config.rce_window_days,
        files: scan.edited.difference(&scan.concurrent).cloned().collect(),
    }
}

/// Slides the window of `old` forward to `now`: drops files that became
/// concurrent or whose edits aged out, and adds newly isolated files.
/// `recent_history` must cover `(old.built_at - window, now]`.
pub fn update_rce_list(
    old: &RceList,
    recent_history: &[PrInterval],
    now: Timestamp,
    config: &RepoConfig,
) -> (RceList, RceDelta) {
    let scan = scan_window(recent_history, now, config);
    let isolated = |f: &String| scan.edited.contains(f) && !scan.concurrent.contains(f);

    let retained: BTreeSet<String> = old.files.iter().filter(|f| isolated(f)).cloned().collect();
    let removed: BTreeSet<String> = old.files.difference(&retained).cloned().collect();
    let added: BTreeSet<String> = scan
        .edited
        .iter()
        .filter(|f| isolated(f) && !old.files.contains(*f))
        .cloned()
        .collect();

    let mut files = retained;
    files.extend(added.iter().cloned());
    (
        RceList {
            repo_id: old.repo_id.clone(),
            built_at: now,
            window_days: config.rce_window_days,
            files,
        },
        RceDelta { added, removed },
    )
}

/// Folds the events of one repository observed up to `at` into PR spans.
/// Events out of sequence for their PR are skipped.
pub fn intervals_from_events<'a>(
    events: impl IntoIterator<Item = &'a PullRequestEvent>,
    repo_id: &str,
    at: Timestamp,
) -> Vec<PrInterval> {
    let mut spans: BTreeMap<PrId, PrInterval> = BTreeMap::new();
    for e in events {
        if e.repo_id != repo_id || e.timestamp > at {
            continue;
        }
        match (e.event_type, spans.get_mut(&e.pr_id)) {
            (EventType::Created, None) => {
                spans.insert(
                    e.pr_id,
                    PrInterval {
                        pr_id: e.pr_id,
                        author: e.author.clone(),
                        created_at: e.timestamp,
                        closed_at: None,
                        files: e.files.clone(),
                    },
                );
            }
            (EventType::Updated | EventType::Closed, Some(span)) if span.closed_at.is_none() => {
                if !e.files.is_empty() {
                    span.files = e.files.clone();
                }
                if e.event_type == EventType::Closed {
                    span.closed_at = Some(e.timestamp);
                }
            }
            _ => {}
        }
    }
    spans.into_values().collect()
}

/// Number of overlap files that are RCEs.
pub fn count_rces(list: &RceList, files: &BTreeSet<String>) -> usize {
    files.iter().filter(|f| list.contains(f)).count()
}
