//! Empirical analysis of concurrent edits on completed pull requests.
//!
//! Given an event corpus this module tags bug-fix PRs, classifies every
//! file edit as concurrent or not, measures how often each kind of edit is
//! followed by a bug fix touching the same file, and rank-correlates edit
//! counts with bug-fix counts per file.

pub mod report;
pub mod stats;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use chrono::Duration;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::config::RepoConfig;
use crate::event::{CloseReason, EventType, PrId, PullRequestEvent, Timestamp};
use crate::filters::{allowed_files, hot_file_window};

pub use stats::{average_ranks, permutation_p_value, significance_stars, spearman_rho, StatsError};

pub const DEFAULT_WINDOWS: [u32; 4] = [1, 7, 14, 30];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletedPr {
    pub repo_id: String,
    pub pr_id: PrId,
    pub author: String,
    pub created_at: Timestamp,
    pub merged_at: Timestamp,
    pub files: BTreeSet<String>,
    pub title: String,
    pub commit_messages: Vec<String>,
    pub is_bug_fix: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditMode {
    Concurrent,
    NonConcurrent,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditRecord {
    pub repo_id: String,
    pub path: String,
    pub pr_id: PrId,
    pub merged_at: Timestamp,
    pub mode: EditMode,
}

fn bug_fix_token() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(?:bug|fix)\b").expect("valid regex"))
}

fn bug_fix_exclusion() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)test\s+case|unit\s+test").expect("valid regex"))
}

/// True when the title or a commit message contains the word "bug" or
/// "fix" and none of them mentions "test case" or "unit test".
pub fn is_bug_fix_text<S: AsRef<str>>(title: &str, commit_messages: &[S]) -> bool {
    let texts = || std::iter::once(title).chain(commit_messages.iter().map(AsRef::as_ref));
    texts().any(|t| bug_fix_token().is_match(t)) && !texts().any(|t| bug_fix_exclusion().is_match(t))
}

pub fn tag_bug_fix(pr: &CompletedPr) -> bool {
    is_bug_fix_text(&pr.title, &pr.commit_messages)
}

/// Why PRs were left out of a corpus.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub merged: usize,
    pub abandoned_or_open: usize,
    pub too_old: usize,
    pub too_many_files: usize,
    pub no_allowed_files: usize,
    pub emptied_by_hot_files: usize,
    pub hot_files: usize,
    pub invalid_events: usize,
}

#[derive(Clone, Debug, Default)]
pub struct Corpus {
    pub prs: Vec<CompletedPr>,
    pub stats: CorpusStats,
}

#[derive(Default)]
struct Draft {
    author: String,
    created_at: Option<Timestamp>,
    closed: Option<(Timestamp, CloseReason)>,
    files: BTreeSet<String>,
    title: String,
    commit_messages: Vec<String>,
}

/// Folds an event stream into the filtered set of merged PRs: PRs open
/// longer than `max_pr_age_days` or touching more than `max_files_per_pr`
/// files are dropped, files are restricted to the allow list, and files
/// that were merged `hot_file_edit_limit` or more times within any 30-day
/// window are removed from the whole repository's corpus.
pub fn build_corpus(events: &[PullRequestEvent], config: &RepoConfig) -> Corpus {
    let mut stats = CorpusStats::default();
    let mut drafts: BTreeMap<(String, PrId), Draft> = BTreeMap::new();

    for e in events {
        let key = (e.repo_id.clone(), e.pr_id);
        let existing = drafts.get(&key);
        let valid = match e.event_type {
            EventType::Created => existing.is_none(),
            _ => existing.is_some_and(|d| d.closed.is_none()),
        };
        if !valid {
            stats.invalid_events += 1;
            continue;
        }
        let d = drafts.entry(key).or_default();
        if e.event_type == EventType::Created {
            d.author = e.author.clone();
            d.created_at = Some(e.timestamp);
        }
        if !e.files.is_empty() {
            d.files = e.files.clone();
        }
        if !e.title.is_empty() {
            d.title = e.title.clone();
        }
        for m in &e.commit_messages {
            if !d.commit_messages.contains(m) {
                d.commit_messages.push(m.clone());
            }
        }
        if let (EventType::Closed, Some(reason)) = (e.event_type, e.close_reason) {
            d.closed = Some((e.timestamp, reason));
        }
    }

    let mut prs = Vec::new();
    for ((repo_id, pr_id), d) in drafts {
        let (Some(created_at), Some((merged_at, CloseReason::Merged))) = (d.created_at, d.closed) else {
            stats.abandoned_or_open += 1;
            continue;
        };
        stats.merged += 1;
        if merged_at - created_at > config.max_pr_age() {
            stats.too_old += 1;
            continue;
        }
        if d.files.len() > config.max_files_per_pr as usize {
            stats.too_many_files += 1;
            continue;
        }
        let files = allowed_files(&d.files, config);
        if files.is_empty() {
            stats.no_allowed_files += 1;
            continue;
        }
        let is_bug_fix = is_bug_fix_text(&d.title, &d.commit_messages);
        prs.push(CompletedPr {
            repo_id,
            pr_id,
            author: d.author,
            created_at,
            merged_at,
            files,
            title: d.title,
            commit_messages: d.commit_messages,
            is_bug_fix,
        });
    }

    let hot = hot_paths(&prs, config);
    stats.hot_files = hot.len();
    if !hot.is_empty() {
        prs.retain_mut(|pr| {
            pr.files.retain(|f| !hot.contains(&(pr.repo_id.clone(), f.clone())));
            if pr.files.is_empty() {
                stats.emptied_by_hot_files += 1;
                false
            } else {
                true
            }
        });
    }
    Corpus { prs, stats }
}

fn hot_paths(prs: &[CompletedPr], config: &RepoConfig) -> BTreeSet<(String, String)> {
    let limit = config.hot_file_edit_limit as usize;
    if limit == 0 {
        return BTreeSet::new();
    }
    let mut merges: BTreeMap<(String, String), Vec<Timestamp>> = BTreeMap::new();
    for pr in prs {
        for f in &pr.files {
            merges.entry((pr.repo_id.clone(), f.clone())).or_default().push(pr.merged_at);
        }
    }
    let window = hot_file_window();
    merges
        .into_iter()
        .filter_map(|(key, mut stamps)| {
            stamps.sort();
            // trailing window (t - 30d, t] ending at each merge
            let mut lo = 0;
            for hi in 0..stamps.len() {
                while stamps[lo] <= stamps[hi] - window {
                    lo += 1;
                }
                if hi + 1 - lo >= limit {
                    return Some(key);
                }
            }
            None
        })
        .collect()
}

/// One record per (path, PR). An edit is concurrent when another PR of the
/// same repository edits the same path and their `[created_at, merged_at]`
/// spans intersect.
pub fn classify_edits(history: &[CompletedPr]) -> Vec<EditRecord> {
    let mut per_file: BTreeMap<(&str, &str), Vec<&CompletedPr>> = BTreeMap::new();
    for pr in history {
        for f in &pr.files {
            per_file.entry((pr.repo_id.as_str(), f.as_str())).or_default().push(pr);
        }
    }
    let mut records = Vec::new();
    for ((repo_id, path), mut prs) in per_file {
        prs.sort_by_key(|p| (p.created_at, p.merged_at, p.pr_id));
        let mut concurrent = vec![false; prs.len()];
        let mut max_end: Option<Timestamp> = None;
        for i in 0..prs.len() {
            let (start, end) = (prs[i].created_at, prs[i].merged_at.max(prs[i].created_at));
            if max_end.is_some_and(|m| start <= m) {
                concurrent[i] = true;
            }
            if prs.get(i + 1).is_some_and(|next| next.created_at <= end) {
                concurrent[i] = true;
            }
            max_end = Some(max_end.map_or(end, |m| m.max(end)));
        }
        for (pr, conc) in prs.iter().zip(concurrent) {
            records.push(EditRecord {
                repo_id: repo_id.to_string(),
                path: path.to_string(),
                pr_id: pr.pr_id,
                merged_at: pr.merged_at,
                mode: if conc {
                    EditMode::Concurrent
                } else {
                    EditMode::NonConcurrent
                },
            });
        }
    }
    records.sort_by(|a, b| (&a.repo_id, a.pr_id, &a.path).cmp(&(&b.repo_id, b.pr_id, &b.path)));
    records
}

/// What the bug-induction rate divides by.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateDenominator {
    /// Every (path, PR) edit record.
    #[default]
    EditEvents,
    /// Distinct paths having at least one record of the mode.
    DistinctFiles,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateCell {
    pub mode: EditMode,
    pub window_days: u32,
    pub followed: usize,
    pub total: usize,
    pub percentage: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BugInductionTable {
    pub denominator: RateDenominator,
    pub cells: Vec<RateCell>,
}

impl BugInductionTable {
    pub fn rate(&self, mode: EditMode, window_days: u32) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.mode == mode && c.window_days == window_days)
            .map(|c| c.percentage)
    }
}

/// Bug-fix merge times per (repo, path), sorted.
fn bug_fix_index(history: &[CompletedPr]) -> BTreeMap<(&str, &str), Vec<Timestamp>> {
    let mut index: BTreeMap<(&str, &str), Vec<Timestamp>> = BTreeMap::new();
    for pr in history.iter().filter(|p| p.is_bug_fix) {
        for f in &pr.files {
            index.entry((pr.repo_id.as_str(), f.as_str())).or_default().push(pr.merged_at);
        }
    }
    for stamps in index.values_mut() {
        stamps.sort();
    }
    index
}

/// Percentage of edits of each mode whose file appears in a bug-fix PR
/// merged within `(merged_at, merged_at + W]`, for each window `W` in days.
pub fn bug_induction_rates(history: &[CompletedPr], windows: &[u32], denominator: RateDenominator) -> BugInductionTable {
    let records = classify_edits(history);
    let mut table = BugInductionTable {
        denominator,
        cells: Vec::new(),
    };
    if records.is_empty() {
        return table;
    }
    let fixes = bug_fix_index(history);
    let followed_within = |r: &EditRecord, days: u32| -> bool {
        let Some(stamps) = fixes.get(&(r.repo_id.as_str(), r.path.as_str())) else {
            return false;
        };
        let first_after = stamps.partition_point(|t| *t <= r.merged_at);
        stamps
            .get(first_after)
            .is_some_and(|t| *t <= r.merged_at + Duration::days(i64::from(days)))
    };

    for mode in [EditMode::Concurrent, EditMode::NonConcurrent] {
        let of_mode: Vec<&EditRecord> = records.iter().filter(|r| r.mode == mode).collect();
        for &w in windows {
            let (followed, total) = match denominator {
                RateDenominator::EditEvents => (of_mode.iter().filter(|r| followed_within(r, w)).count(), of_mode.len()),
                RateDenominator::DistinctFiles => {
                    let files: BTreeSet<(&str, &str)> =
                        of_mode.iter().map(|r| (r.repo_id.as_str(), r.path.as_str())).collect();
                    let hit: BTreeSet<(&str, &str)> = of_mode
                        .iter()
                        .filter(|r| followed_within(r, w))
                        .map(|r| (r.repo_id.as_str(), r.path.as_str()))
                        .collect();
                    (hit.len(), files.len())
                }
            };
            let percentage = if total == 0 {
                0.0
            } else {
                100.0 * followed as f64 / total as f64
            };
            table.cells.push(RateCell {
                mode,
                window_days: w,
                followed,
                total,
                percentage,
            });
        }
    }
    table
}

/// Per-file counts feeding the correlation report.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FileCounts {
    pub total: usize,
    pub concurrent: usize,
    pub non_concurrent: usize,
    pub bug_fixes: usize,
}

/// Edit and bug-fix counts per file, grouped by repository.
pub fn file_counts(history: &[CompletedPr]) -> BTreeMap<String, BTreeMap<String, FileCounts>> {
    let mut out: BTreeMap<String, BTreeMap<String, FileCounts>> = BTreeMap::new();
    for r in classify_edits(history) {
        let c = out.entry(r.repo_id).or_default().entry(r.path).or_default();
        c.total += 1;
        match r.mode {
            EditMode::Concurrent => c.concurrent += 1,
            EditMode::NonConcurrent => c.non_concurrent += 1,
        }
    }
    for pr in history.iter().filter(|p| p.is_bug_fix) {
        let repo = out.entry(pr.repo_id.clone()).or_default();
        for f in &pr.files {
            repo.entry(f.clone()).or_default().bug_fixes += 1;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub repo_id: String,
    pub rho_total: Option<f64>,
    pub rho_concurrent: Option<f64>,
    pub rho_non_concurrent: Option<f64>,
    pub p_total: Option<f64>,
    pub p_concurrent: Option<f64>,
    pub p_non_concurrent: Option<f64>,
    /// Distinct files.
    pub n: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub rows: Vec<CorrelationRow>,
    pub warnings: Vec<String>,
    pub permutations: usize,
    pub seed: u64,
}

/// Spearman correlation, per repository, between each file's edit count
/// (total, concurrent, non-concurrent) and the number of bug-fix PRs
/// containing it. Undefined coefficients (constant columns) are `None`.
pub fn correlation_report(history: &[CompletedPr], permutations: usize, seed: u64) -> CorrelationReport {
    let mut report = CorrelationReport {
        permutations,
        seed,
        ..Default::default()
    };
    for (repo_idx, (repo_id, files)) in file_counts(history).into_iter().enumerate() {
        if files.len() < 2 {
            report
                .warnings
                .push(format!("{repo_id}: fewer than 2 distinct files, row omitted"));
            continue;
        }
        let ys: Vec<f64> = files.values().map(|c| c.bug_fixes as f64).collect();
        let column = |pick: fn(&FileCounts) -> usize, col: u64| -> (Option<f64>, Option<f64>) {
            let xs: Vec<f64> = files.values().map(|c| pick(c) as f64).collect();
            let rho = spearman_rho(&xs, &ys).ok();
            let col_seed = seed
                .wrapping_add((repo_idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
                .wrapping_add(col);
            let p = rho.and_then(|_| permutation_p_value(&xs, &ys, permutations, col_seed).ok());
            (rho, p)
        };
        let (rho_total, p_total) = column(|c| c.total, 0);
        let (rho_concurrent, p_concurrent) = column(|c| c.concurrent, 1);
        let (rho_non_concurrent, p_non_concurrent) = column(|c| c.non_concurrent, 2);
        if rho_total.is_none() || rho_concurrent.is_none() || rho_non_concurrent.is_none() {
            report
                .warnings
                .push(format!("{repo_id}: some coefficients undefined (constant counts)"));
        }
        report.rows.push(CorrelationRow {
            repo_id,
            rho_total,
            rho_concurrent,
            rho_non_concurrent,
            p_total,
            p_concurrent,
            p_non_concurrent,
            n: files.len(),
        });
    }
    report
}
