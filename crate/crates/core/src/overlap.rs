//! Extent of Overlap (EOO) between a reference PR and an active PR.
//!
//! Both file sets are expected to be filtered (allow list, hot files)
//! before they get here, so numerator and denominator share one universe.

use std::collections::BTreeSet;

/// Files edited in both PRs.
pub fn overlap_files(ref_files: &BTreeSet<String>, active_files: &BTreeSet<String>) -> BTreeSet<String> {
    ref_files.intersection(active_files).cloned().collect()
}

/// An EOO value. Thresholds compare against [`Percentage::value`]; the
/// rounded form is for display.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Percentage(f64);

impl Percentage {
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn rounded(self) -> f64 {
        round2(self.0)
    }
}

pub fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// `|ref ∩ active| / |ref| * 100`, or 0 when the reference set is empty.
pub fn extent_of_overlap(ref_files: &BTreeSet<String>, active_files: &BTreeSet<String>) -> Percentage {
    if ref_files.is_empty() {
        return Percentage(0.0);
    }
    let shared = ref_files.intersection(active_files).count();
    Percentage(eoo_from_counts(shared, ref_files.len()))
}

pub(crate) fn eoo_from_counts(shared: usize, reference: usize) -> f64 {
    if reference == 0 {
        0.0
    } else {
        shared as f64 * 100.0 / reference as f64
    }
}
