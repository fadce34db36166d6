//! Seeded generators and brute-force oracles shared by the integration tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Duration, TimeZone, Utc};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cone_core::config::RepoConfig;
use cone_core::event::{CloseReason, EventType, PrId, PullRequestEvent, Timestamp};
use cone_core::model::Candidate;
use cone_core::rce::PrInterval;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn epoch() -> Timestamp {
    Utc.with_ymd_and_hms(2021, 1, 4, 9, 0, 0).unwrap()
}

pub fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Shape of a generated event stream.
#[derive(Clone, Debug)]
pub struct StreamSpec {
    pub repo_id: String,
    pub events: usize,
    pub max_prs: usize,
    pub files: usize,
    /// Open PRs the generator steers towards.
    pub target_active: usize,
    /// Gap between consecutive events, in seconds.
    pub step_secs: (i64, i64),
    pub max_files_per_pr: usize,
    pub authors: usize,
    pub extensions: Vec<&'static str>,
}

impl StreamSpec {
    pub fn small(repo_id: &str) -> Self {
        Self {
            repo_id: repo_id.to_string(),
            events: 150,
            max_prs: 50,
            files: 60,
            target_active: 12,
            step_secs: (0, 2 * 86_400),
            max_files_per_pr: 8,
            authors: 6,
            extensions: vec!["cs", "py", "ts", "md", "json", "CS"],
        }
    }

    /// Many events, a few hundred open PRs, minutes between events.
    pub fn busy(repo_id: &str, events: usize, target_active: usize) -> Self {
        Self {
            repo_id: repo_id.to_string(),
            events,
            max_prs: usize::MAX,
            files: 3_000,
            target_active,
            step_secs: (30, 600),
            max_files_per_pr: 12,
            authors: 40,
            extensions: vec!["cs", "cpp", "ts", "java", "py", "xml", "md"],
        }
    }
}

fn path_for(idx: usize, spec: &StreamSpec) -> String {
    let ext = spec.extensions[idx % spec.extensions.len()];
    format!("src/m{}/f{idx}.{ext}", idx % 7)
}

fn pick_files(rng: &mut ChaCha8Rng, spec: &StreamSpec) -> BTreeSet<String> {
    let k = rng.random_range(1..=spec.max_files_per_pr);
    (0..k)
        .map(|_| {
            // squared uniform skews towards low indices, giving shared hot spots
            let u: f64 = rng.random();
            let idx = ((u * u) * spec.files as f64) as usize;
            path_for(idx.min(spec.files - 1), spec)
        })
        .collect()
}

struct OpenPr {
    id: PrId,
    author: String,
    files: BTreeSet<String>,
    users: BTreeSet<String>,
}

/// A valid event stream: unique ids, created first, at most one close,
/// non-decreasing timestamps.
pub fn event_stream(seed: u64, spec: &StreamSpec) -> Vec<PullRequestEvent> {
    let mut rng = rng(seed);
    let mut open: Vec<OpenPr> = Vec::new();
    let mut events = Vec::with_capacity(spec.events);
    let mut next_id: PrId = 1;
    let mut created = 0usize;
    let mut t = epoch();
    let author = |i: usize| format!("dev{i}");

    while events.len() < spec.events {
        t += Duration::seconds(rng.random_range(spec.step_secs.0..=spec.step_secs.1));
        let can_create = created < spec.max_prs;
        let create_bias = if open.len() < spec.target_active { 0.7 } else { 0.25 };
        let roll: f64 = rng.random();
        let title = if rng.random_bool(0.3) {
            "Fix crash in handler".to_string()
        } else {
            "Add feature".to_string()
        };

        if can_create && (open.is_empty() || roll < create_bias) {
            let pr = OpenPr {
                id: next_id,
                author: author(rng.random_range(0..spec.authors)),
                files: pick_files(&mut rng, spec),
                users: BTreeSet::new(),
            };
            next_id += 1;
            created += 1;
            events.push(PullRequestEvent {
                repo_id: spec.repo_id.clone(),
                pr_id: pr.id,
                event_type: EventType::Created,
                timestamp: t,
                author: pr.author.clone(),
                files: pr.files.clone(),
                title,
                commit_messages: Vec::new(),
                interacting_users: BTreeSet::new(),
                close_reason: None,
            });
            open.push(pr);
            continue;
        }
        if open.is_empty() {
            break;
        }
        let slot = rng.random_range(0..open.len());
        if roll < create_bias + 0.3 || !can_create && rng.random_bool(0.4) {
            let pr = open.swap_remove(slot);
            let merged = rng.random_bool(0.75);
            let files = if rng.random_bool(0.5) {
                BTreeSet::new()
            } else {
                pr.files.clone()
            };
            events.push(PullRequestEvent {
                repo_id: spec.repo_id.clone(),
                pr_id: pr.id,
                event_type: EventType::Closed,
                timestamp: t,
                author: pr.author,
                files,
                title,
                commit_messages: Vec::new(),
                interacting_users: pr.users,
                close_reason: Some(if merged {
                    CloseReason::Merged
                } else {
                    CloseReason::Abandoned
                }),
            });
        } else {
            let pr = &mut open[slot];
            if rng.random_bool(0.5) {
                let extra = pick_files(&mut rng, spec);
                pr.files.extend(extra.into_iter().take(2));
            }
            if pr.files.len() > 1 && rng.random_bool(0.3) {
                let victim = pr.files.iter().next().cloned().unwrap();
                pr.files.remove(&victim);
            }
            if rng.random_bool(0.15) {
                pr.users.insert(author(rng.random_range(0..spec.authors)));
            }
            events.push(PullRequestEvent {
                repo_id: spec.repo_id.clone(),
                pr_id: pr.id,
                event_type: EventType::Updated,
                timestamp: t,
                author: pr.author.clone(),
                files: pr.files.clone(),
                title,
                commit_messages: vec!["wip".to_string()],
                interacting_users: pr.users.clone(),
                close_reason: None,
            });
        }
    }
    events
}

/// A configuration with randomized thresholds.
pub fn random_config(rng: &mut ChaCha8Rng) -> RepoConfig {
    RepoConfig {
        eoo_min: *[0.0, 25.0, 50.0, 66.7, 100.0].choose(rng).unwrap(),
        rce_min: rng.random_range(0..=3),
        min_overlap_files: rng.random_range(0..=3),
        max_pr_age_days: *[3, 10, 30].choose(rng).unwrap(),
        max_files_per_pr: *[4, 6, 50].choose(rng).unwrap(),
        hot_file_edit_limit: *[0, 2, 3, 20].choose(rng).unwrap(),
        rce_window_days: *[5, 30, 90].choose(rng).unwrap(),
        rce_refresh_days: *[1, 7].choose(rng).unwrap(),
        exclude_same_author: rng.random_bool(0.7),
        ..RepoConfig::default()
    }
}

fn lower_ext(path: &str) -> Option<String> {
    let name = path.rsplit('/').next()?;
    let dot = name.rfind('.')?;
    (dot > 0 && dot + 1 < name.len()).then(|| format!(".{}", name[dot + 1..].to_lowercase()))
}

fn allowed(path: &str, config: &RepoConfig) -> bool {
    lower_ext(path).is_some_and(|e| config.allow_list.contains(&e))
}

struct FoldedPr {
    author: String,
    created: Timestamp,
    files: BTreeSet<String>,
    users: BTreeSet<String>,
    closed: Option<(Timestamp, CloseReason)>,
}

/// Independent fold of raw events, used as the detection oracle.
#[derive(Default)]
pub struct OracleRepo {
    prs: BTreeMap<PrId, FoldedPr>,
}

impl OracleRepo {
    pub fn apply(&mut self, e: &PullRequestEvent) {
        match e.event_type {
            EventType::Created => {
                self.prs.insert(
                    e.pr_id,
                    FoldedPr {
                        author: e.author.clone(),
                        created: e.timestamp,
                        files: e.files.clone(),
                        users: e.interacting_users.clone(),
                        closed: None,
                    },
                );
            }
            EventType::Updated => {
                let pr = self.prs.get_mut(&e.pr_id).unwrap();
                if !e.files.is_empty() {
                    pr.files = e.files.clone();
                }
                pr.users = e.interacting_users.clone();
            }
            EventType::Closed => {
                let pr = self.prs.get_mut(&e.pr_id).unwrap();
                if !e.files.is_empty() {
                    pr.files = e.files.clone();
                }
                pr.closed = Some((e.timestamp, e.close_reason.unwrap()));
            }
        }
    }

    /// Straight-line detection: gates, file sets, every pair, the
    /// predicate, then a full sort.
    pub fn candidates(
        &self,
        reference: PrId,
        rce_files: &BTreeSet<String>,
        now: Timestamp,
        config: &RepoConfig,
    ) -> Vec<Candidate> {
        let prs = &self.prs;
        let month = Duration::days(30);
        let max_age = Duration::days(i64::from(config.max_pr_age_days));

        let mut merges: BTreeMap<&str, usize> = BTreeMap::new();
        for pr in prs.values() {
            if let Some((at, CloseReason::Merged)) = pr.closed {
                if at > now - month && at <= now {
                    for f in pr.files.iter().filter(|f| allowed(f, config)) {
                        *merges.entry(f.as_str()).or_default() += 1;
                    }
                }
            }
        }
        let hot = |f: &str| {
            config.hot_file_edit_limit > 0 && merges.get(f).copied().unwrap_or(0) >= config.hot_file_edit_limit as usize
        };
        let effective = |pr: &FoldedPr| -> BTreeSet<String> {
            pr.files.iter().filter(|f| allowed(f, config) && !hot(f)).cloned().collect()
        };
        let gated = |pr: &FoldedPr| {
            pr.closed.is_none() && now - pr.created <= max_age && pr.files.len() <= config.max_files_per_pr as usize
        };

        let r = &prs[&reference];
        let ref_files = effective(r);
        if !gated(r) || ref_files.is_empty() {
            return Vec::new();
        }

        let mut out = Vec::new();
        for (&id, a) in prs {
            if id == reference || !gated(a) {
                continue;
            }
            if config.exclude_same_author && a.author == r.author {
                continue;
            }
            if a.users.contains(&r.author) {
                continue;
            }
            let a_files = effective(a);
            let shared: BTreeSet<String> = ref_files.iter().filter(|f| a_files.contains(*f)).cloned().collect();
            if shared.is_empty() {
                continue;
            }
            let eoo = shared.len() as f64 * 100.0 / ref_files.len() as f64;
            let rces = shared.iter().filter(|f| rce_files.contains(*f)).count();
            let pass = (eoo >= config.eoo_min && shared.len() >= config.min_overlap_files as usize)
                || rces >= config.rce_min as usize;
            if pass {
                out.push(Candidate {
                    reference_pr: reference,
                    active_pr: id,
                    eoo,
                    overlap_files: shared,
                    rce_count: rces,
                });
            }
        }
        out.sort_by(|x, y| {
            y.rce_count
                .cmp(&x.rce_count)
                .then(y.eoo.total_cmp(&x.eoo))
                .then(x.active_pr.cmp(&y.active_pr))
        });
        out
    }
}

/// Random PR spans over roughly 200 days.
pub fn random_history(rng: &mut ChaCha8Rng, n: usize, files: usize) -> Vec<PrInterval> {
    (0..n)
        .map(|i| {
            let start = epoch() + Duration::hours(rng.random_range(0..200 * 24));
            let closed_at = rng
                .random_bool(0.85)
                .then(|| start + Duration::hours(rng.random_range(0..20 * 24)));
            let k = rng.random_range(1..=5);
            let files = (0..k)
                .map(|_| {
                    let idx = rng.random_range(0..files);
                    let ext = ["cs", "py", "md"][idx % 3];
                    format!("f{idx}.{ext}")
                })
                .collect();
            PrInterval {
                pr_id: i as PrId + 1,
                author: format!("dev{}", i % 5),
                created_at: start,
                closed_at,
                files,
            }
        })
        .collect()
}

/// RCE files by pairwise comparison of windowed spans (file-level reading).
pub fn brute_force_rces(history: &[PrInterval], now: Timestamp, config: &RepoConfig) -> BTreeSet<String> {
    let window_start = now - Duration::days(i64::from(config.rce_window_days));
    let windowed: Vec<(Timestamp, Timestamp, BTreeSet<String>)> = history
        .iter()
        .filter(|h| h.created_at > window_start && h.created_at <= now)
        .map(|h| {
            let end = h.closed_at.filter(|c| *c <= now).unwrap_or(now).max(h.created_at);
            let files = h.files.iter().filter(|f| allowed(f, config)).cloned().collect();
            (h.created_at, end, files)
        })
        .collect();
    let mut edited = BTreeSet::new();
    let mut concurrent = BTreeSet::new();
    for (i, (s1, e1, f1)) in windowed.iter().enumerate() {
        edited.extend(f1.iter().cloned());
        for (s2, e2, f2) in &windowed[i + 1..] {
            if s1 <= e2 && s2 <= e1 {
                concurrent.extend(f1.intersection(f2).cloned());
            }
        }
    }
    edited.difference(&concurrent).cloned().collect()
}
