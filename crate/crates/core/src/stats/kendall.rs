//! Kendall tau-b with tie correction in both variables. Two-sided p-value by
//! exact permutation enumeration for n <= 8 and by the tie-adjusted normal
//! approximation (with continuity correction) above that.

use super::StatsError;
use crate::special::normal_two_sided_p;
use serde::{Deserialize, Serialize};

/// Largest n for which the default path enumerates all permutations.
pub const EXACT_MAX_N: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub tau: f64,
    pub p_value: f64,
    pub n: usize,
}

/// P-value route selection; `Auto` switches on the small-sample threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PValueMode {
    Auto,
    Exact,
    Approximate,
}

pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    kendall_tau_b_with_mode(x, y, PValueMode::Auto)
}

pub fn kendall_tau_b_with_mode(
    x: &[f64],
    y: &[f64],
    mode: PValueMode,
) -> Result<CorrelationResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch { x: x.len(), y: y.len() });
    }
    let n = x.len();
    if n < 2 {
        return Err(StatsError::TooFew { needed: 2, got: n });
    }
    if is_constant(x) || is_constant(y) {
        return Err(StatsError::AllTied);
    }

    let s = s_statistic(x, y);
    let n0 = (n * (n - 1) / 2) as f64;
    let (t1x, ..) = tie_sums(x);
    let (t1y, ..) = tie_sums(y);
    let denom = ((n0 - t1x) * (n0 - t1y)).sqrt();
    let tau = s as f64 / denom;

    let exact = match mode {
        PValueMode::Exact => true,
        PValueMode::Approximate => false,
        PValueMode::Auto => n <= EXACT_MAX_N,
    };
    let p_value = if exact {
        exact_p(x, y, s)
    } else {
        approx_p(x, y, s)
    };
    Ok(CorrelationResult { tau, p_value, n })
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&a| a == v[0])
}

fn sign(d: f64) -> i64 {
    if d > 0.0 {
        1
    } else if d < 0.0 {
        -1
    } else {
        0
    }
}

/// S = sum over pairs of sign(xj - xi) * sign(yj - yi).
fn s_statistic(x: &[f64], y: &[f64]) -> i64 {
    let mut s = 0i64;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            s += sign(x[j] - x[i]) * sign(y[j] - y[i]);
        }
    }
    s
}

/// Returns (sum t(t-1)/2, sum t(t-1)(t-2), sum t(t-1)(2t+5)) over tie groups.
fn tie_sums(v: &[f64]) -> (f64, f64, f64) {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        s1 += t * (t - 1.0) / 2.0;
        s2 += t * (t - 1.0) * (t - 2.0);
        s3 += t * (t - 1.0) * (2.0 * t + 5.0);
        i = j;
    }
    (s1, s2, s3)
}

/// Exact two-sided p: share of permutations of y with |S| >= |observed S|.
/// Enumerates all n! arrangements (Heap's algorithm); duplicate arrangements
/// of tied values are counted uniformly, so the conditional null distribution
/// is exact.
fn exact_p(x: &[f64], y: &[f64], s_obs: i64) -> f64 {
    let n = y.len();
    let mut perm = y.to_vec();
    let mut counts = vec![0usize; n]; // Heap's algorithm state
    let mut extreme = 0u64;
    let mut total = 0u64;
    let target = s_obs.abs();

    let mut tally = |p: &[f64]| {
        if s_statistic(x, p).abs() >= target {
            extreme += 1;
        }
        total += 1;
    };
    tally(&perm);
    let mut i = 0;
    while i < n {
        if counts[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counts[i], i);
            }
            tally(&perm);
            counts[i] += 1;
            i = 0;
        } else {
            counts[i] = 0;
            i += 1;
        }
    }
    extreme as f64 / total as f64
}

/// Tie-adjusted normal approximation for the null variance of S, with a
/// continuity correction: 1 when neither variable has ties (S then moves in
/// steps of 2), 0.5 otherwise.
fn approx_p(x: &[f64], y: &[f64], s: i64) -> f64 {
    let n = x.len() as f64;
    let (t1x, t2x, t3x) = tie_sums(x);
    let (t1y, t2y, t3y) = tie_sums(y);
    let v0 = n * (n - 1.0) * (2.0 * n + 5.0);
    let mut var = (v0 - t3x - t3y) / 18.0;
    if n > 2.0 {
        var += t2x * t2y / (9.0 * n * (n - 1.0) * (n - 2.0));
    }
    var += (2.0 * t1x) * (2.0 * t1y) / (2.0 * n * (n - 1.0));
    if var <= 0.0 {
        return 1.0;
    }
    let cc = if t1x == 0.0 && t1y == 0.0 { 1.0 } else { 0.5 };
    let z = ((s.abs() as f64) - cc).max(0.0) / var.sqrt();
    normal_two_sided_p(z).min(1.0)
}
