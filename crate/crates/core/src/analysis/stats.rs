//! Spearman rank correlation with average-rank ties, and a seeded
//! permutation test for its significance.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 observations, got {0}")]
    TooFewObservations(usize),
    #[error("correlation undefined: a rank vector has zero variance")]
    ZeroVariance,
    #[error("inputs must be finite")]
    NonFinite,
    #[error("need at least {min} permutations, got {got}")]
    TooFewIterations { min: usize, got: usize },
}

pub const MIN_PERMUTATIONS: usize = 100;

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1 ..= end
        let shared = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = shared;
        }
        start = end;
    }
    ranks
}

fn check_inputs(xs: &[f64], ys: &[f64]) -> Result<(), StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(StatsError::TooFewObservations(xs.len()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

/// Mean-centered ranks and their sum of squares.
struct CenteredRanks {
    values: Vec<f64>,
    sum_sq: f64,
}

impl CenteredRanks {
    fn new(values: &[f64]) -> Self {
        let ranks = average_ranks(values);
        let mean = ranks.iter().sum::<f64>() / ranks.len() as f64;
        let values: Vec<f64> = ranks.iter().map(|r| r - mean).collect();
        let sum_sq = values.iter().map(|v| v * v).sum();
        Self { values, sum_sq }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn prepared(xs: &[f64], ys: &[f64]) -> Result<(CenteredRanks, CenteredRanks, f64), StatsError> {
    check_inputs(xs, ys)?;
    let rx = CenteredRanks::new(xs);
    let ry = CenteredRanks::new(ys);
    if rx.sum_sq <= 0.0 || ry.sum_sq <= 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let norm = (rx.sum_sq * ry.sum_sq).sqrt();
    Ok((rx, ry, norm))
}

/// Pearson correlation of the average-rank transforms of `xs` and `ys`.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    let (rx, ry, norm) = prepared(xs, ys)?;
    Ok((dot(&rx.values, &ry.values) / norm).clamp(-1.0, 1.0))
}

/// Slack when comparing permuted statistics against the observed one, so
/// that permutations reproducing the observed ranks count as extreme.
const TIE_EPSILON: f64 = 1e-12;

/// Two-sided permutation p-value for Spearman's rho.
///
/// With `iterations` random permutations of `ys`, returns
/// `(1 + #{|rho*| >= |rho|}) / (iterations + 1)`. When `n!` does not exceed
/// `iterations` every permutation is enumerated instead and the exact
/// proportion is returned.
pub fn permutation_p_value(xs: &[f64], ys: &[f64], iterations: usize, seed: u64) -> Result<f64, StatsError> {
    if iterations < MIN_PERMUTATIONS {
        return Err(StatsError::TooFewIterations {
            min: MIN_PERMUTATIONS,
            got: iterations,
        });
    }
    let (rx, ry, norm) = prepared(xs, ys)?;
    let observed = (dot(&rx.values, &ry.values) / norm).abs();
    let threshold = observed - TIE_EPSILON;

    if let Some(total) = factorial_up_to(xs.len(), iterations) {
        let mut perm = ry.values.clone();
        let mut extreme = 0usize;
        for_each_permutation(&mut perm, &mut |p| {
            if (dot(&rx.values, p) / norm).abs() >= threshold {
                extreme += 1;
            }
        });
        return Ok(extreme as f64 / total as f64);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm = ry.values.clone();
    let mut extreme = 0usize;
    for _ in 0..iterations {
        perm.shuffle(&mut rng);
        if (dot(&rx.values, &perm) / norm).abs() >= threshold {
            extreme += 1;
        }
    }
    Ok((1 + extreme) as f64 / (iterations + 1) as f64)
}

/// `n!` if it is at most `limit`.
fn factorial_up_to(n: usize, limit: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for k in 2..=n {
        acc = acc.checked_mul(k)?;
        if acc > limit {
            return None;
        }
    }
    Some(acc)
}

/// Heap's algorithm; visits every ordering of `items` exactly once.
fn for_each_permutation(items: &mut [f64], visit: &mut dyn FnMut(&[f64])) {
    let n = items.len();
    let mut c = vec![0usize; n];
    visit(items);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                items.swap(0, i);
            } else {
                items.swap(c[i], i);
            }
            visit(items);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// `***` below 0.001, `**` below 0.01, `*` below 0.05.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}
