//! Candidate selection for a reference PR.
//!
//! Steps, in order: reference age/size gate, reference file set (allow list
//! minus hot files), candidate pairs, EOO per pair, RCE count per pair,
//! threshold predicate, ranking.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RepoConfig;
use crate::event::{PrId, Timestamp};
use crate::filters::{effective_files, is_candidate_pair, is_eligible_reference, EditFrequencyTracker};
use crate::model::{ActivePullRequest, Candidate};
use crate::overlap::extent_of_overlap;
use crate::rce::{count_rces, RceList};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub reference_pr: PrId,
    pub candidates: Vec<Candidate>,
    pub evaluated_at: Timestamp,
    /// Set by the caller when the re-notification rule blocks emission.
    pub suppressed: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DetectorError {
    #[error("reference PR {0} is not in the active index")]
    ReferenceMissing(PrId),
}

/// The threshold predicate. A pair with no overlapping file never passes.
pub fn passes_thresholds(eoo: f64, overlap_count: usize, rce_count: usize, config: &RepoConfig) -> bool {
    if overlap_count == 0 {
        return false;
    }
    let eoo_branch = eoo >= config.eoo_min && overlap_count >= config.min_overlap_files as usize;
    let rce_branch = rce_count >= config.rce_min as usize;
    eoo_branch || rce_branch
}

/// Ordering used for ranking: more RCEs first, then higher EOO, then lower PR id.
pub fn candidate_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.rce_count
        .cmp(&a.rce_count)
        .then_with(|| b.eoo.partial_cmp(&a.eoo).unwrap_or(Ordering::Equal))
        .then_with(|| a.active_pr.cmp(&b.active_pr))
}

pub fn rank(mut candidates: Vec<Candidate>) -> Vec<Candidate> {
    candidates.sort_by(candidate_order);
    candidates
}

/// Runs detection for `reference_pr` against every PR in `index`.
pub fn evaluate<'a, I>(
    reference_pr: PrId,
    index: I,
    rces: &RceList,
    tracker: &EditFrequencyTracker,
    now: Timestamp,
    config: &RepoConfig,
) -> Result<DetectionResult, DetectorError>
where
    I: IntoIterator<Item = &'a ActivePullRequest>,
    I::IntoIter: Clone,
{
    let index = index.into_iter();
    let reference = index
        .clone()
        .find(|pr| pr.pr_id == reference_pr)
        .ok_or(DetectorError::ReferenceMissing(reference_pr))?;

    let mut result = DetectionResult {
        reference_pr,
        candidates: Vec::new(),
        evaluated_at: now,
        suppressed: false,
    };
    if !is_eligible_reference(reference, now, tracker, config) {
        return Ok(result);
    }
    let ref_files = effective_files(reference, now, tracker, config);

    let mut candidates = Vec::new();
    for other in index.filter(|other| is_candidate_pair(reference, other, now, config)) {
        let active_files = effective_files(other, now, tracker, config);
        let shared: BTreeSet<String> = ref_files.intersection(&active_files).cloned().collect();
        if shared.is_empty() {
            continue;
        }
        let eoo = extent_of_overlap(&ref_files, &active_files).value();
        let rce_count = count_rces(rces, &shared);
        if passes_thresholds(eoo, shared.len(), rce_count, config) {
            candidates.push(Candidate {
                reference_pr,
                active_pr: other.pr_id,
                eoo,
                overlap_files: shared,
                rce_count,
            });
        }
    }
    result.candidates = rank(candidates);
    Ok(result)
}

/// True when the new candidate set contains a PR not already notified for
/// this reference PR.
pub fn should_renotify<'a>(
    previously_notified: impl IntoIterator<Item = &'a BTreeSet<PrId>>,
    new_candidates: &[Candidate],
) -> bool {
    if new_candidates.is_empty() {
        return false;
    }
    let seen: BTreeSet<PrId> = previously_notified.into_iter().flatten().copied().collect();
    new_candidates.iter().any(|c| !seen.contains(&c.active_pr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::parse_timestamp;
    use crate::filters::allowed_files;
    use crate::model::PrStatus;
    use chrono::Duration;

    fn now() -> Timestamp {
        parse_timestamp("2020-04-01T00:00:00Z").unwrap()
    }

    fn pr(id: u64, author: &str, age_days: i64, files: &[&str]) -> ActivePullRequest {
        let raw: BTreeSet<String> = files.iter().map(|s| s.to_string()).collect();
        ActivePullRequest {
            repo_id: "r".into(),
            pr_id: id,
            author: author.into(),
            created_at: now() - Duration::days(age_days),
            last_updated: now(),
            filtered_files: allowed_files(&raw, &RepoConfig::default()),
            raw_files: raw,
            status: PrStatus::Active,
            interacting_users: BTreeSet::new(),
        }
    }

    fn cand(active: u64, eoo: f64, rce: usize) -> Candidate {
        Candidate {
            reference_pr: 1,
            active_pr: active,
            eoo,
            overlap_files: BTreeSet::new(),
            rce_count: rce,
        }
    }

    fn rces(files: &[&str]) -> RceList {
        let mut l = RceList::empty("r", now(), 90);
        l.files = files.iter().map(|s| s.to_string()).collect();
        l
    }

    #[test]
    fn stale_reference_yields_nothing() {
        let index = vec![pr(1, "a", 31, &["a.cs", "b.cs"]), pr(2, "b", 1, &["a.cs", "b.cs"])];
        let res = evaluate(1, &index, &rces(&[]), &EditFrequencyTracker::new(), now(), &RepoConfig::default())
            .unwrap();
        assert!(res.candidates.is_empty());
        assert!(!res.suppressed);
    }

    #[test]
    fn rce_candidate_ranks_first() {
        let index = vec![
            pr(1, "alice", 2, &["a.cs", "b.cs", "c.cs", "d.cs"]),
            pr(7, "bob", 3, &["a.cs", "b.cs"]),
            pr(9, "carol", 3, &["c.cs", "d.cs"]),
        ];
        let res = evaluate(
            1,
            &index,
            &rces(&["c.cs", "d.cs"]),
            &EditFrequencyTracker::new(),
            now(),
            &RepoConfig::default(),
        )
        .unwrap();
        let ids: Vec<u64> = res.candidates.iter().map(|c| c.active_pr).collect();
        assert_eq!(ids, vec![9, 7]);
        assert_eq!(res.candidates[0].rce_count, 2);
        assert_eq!(res.candidates[1].rce_count, 0);
        assert_eq!(res.candidates[1].eoo, 50.0);
    }

    #[test]
    fn single_shared_file_is_not_enough() {
        let index = vec![pr(1, "alice", 2, &["a.cs", "b.cs"]), pr(2, "bob", 2, &["a.cs", "z.cs"])];
        let res = evaluate(1, &index, &rces(&[]), &EditFrequencyTracker::new(), now(), &RepoConfig::default())
            .unwrap();
        assert!(res.candidates.is_empty());
    }

    #[test]
    fn missing_reference_is_an_error() {
        let index = vec![pr(2, "bob", 2, &["a.cs"])];
        let err = evaluate(1, &index, &rces(&[]), &EditFrequencyTracker::new(), now(), &RepoConfig::default())
            .unwrap_err();
        assert_eq!(err, DetectorError::ReferenceMissing(1));
    }

    #[test]
    fn ranking_rules() {
        let ranked = rank(vec![cand(3, 95.0, 0), cand(4, 35.0, 2)]);
        assert_eq!(ranked[0].active_pr, 4);
        let ranked = rank(vec![cand(12, 60.0, 1), cand(7, 60.0, 1)]);
        assert_eq!(ranked[0].active_pr, 7);
        let single = rank(vec![cand(5, 10.0, 0)]);
        assert_eq!(single, vec![cand(5, 10.0, 0)]);
    }

    #[test]
    fn threshold_predicate() {
        let cfg = RepoConfig::default();
        assert!(passes_thresholds(50.0, 2, 0, &cfg));
        assert!(!passes_thresholds(49.99, 2, 0, &cfg));
        assert!(!passes_thresholds(50.0, 1, 0, &cfg));
        assert!(passes_thresholds(10.0, 2, 2, &cfg));
        assert!(passes_thresholds(100.0, 1, 2, &cfg));
        let zero = RepoConfig {
            rce_min: 0,
            ..cfg
        };
        assert!(!passes_thresholds(0.0, 0, 0, &zero));
    }

    #[test]
    fn renotification() {
        let seven: BTreeSet<u64> = [7].into_iter().collect();
        assert!(!should_renotify([&seven], &[cand(7, 60.0, 0)]));
        assert!(should_renotify([&seven], &[cand(7, 60.0, 0), cand(9, 60.0, 0)]));
        assert!(should_renotify(std::iter::empty(), &[cand(7, 60.0, 0)]));
        assert!(!should_renotify(std::iter::empty(), &[]));
    }
}
