//! One-way analysis of variance over two or more groups.

use super::{diff_of_means, group_summaries, stars, StatsError, TestKind, TestResult};
use crate::special::f_sf;

/// F = MS_between / MS_within; p from the F survival function with
/// (k-1, N-k) degrees of freedom. Degenerate inputs are reported, not
/// rejected: zero within-group variance with differing means gives p = 0,
/// and a completely constant dataset gives statistic 0 with p = 1.
pub fn anova_one_way(groups: &[Vec<f64>]) -> Result<TestResult, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFew { needed: 2, got: groups.len() });
    }
    if groups.iter().any(|g| g.is_empty()) {
        return Err(StatsError::EmptyGroup);
    }
    if let Some(small) = groups.iter().map(|g| g.len()).find(|&n| n < 2) {
        return Err(StatsError::TooFew { needed: 2, got: small });
    }

    let n_total: usize = groups.iter().map(|g| g.len()).sum();
    let grand: f64 = groups.iter().flatten().sum::<f64>() / n_total as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    let mut means = Vec::with_capacity(groups.len());
    for g in groups {
        let m: f64 = g.iter().sum::<f64>() / g.len() as f64;
        ssb += g.len() as f64 * (m - grand) * (m - grand);
        ssw += g.iter().map(|&x| (x - m) * (x - m)).sum::<f64>();
        means.push(m);
    }

    let df_between = (groups.len() - 1) as f64;
    let df_within = (n_total - groups.len()) as f64;
    let (statistic, p_value) = if ssw == 0.0 {
        if ssb == 0.0 {
            (0.0, 1.0) // constant everywhere: no variance to partition
        } else {
            (f64::INFINITY, 0.0)
        }
    } else {
        let f = (ssb / df_between) / (ssw / df_within);
        (f, f_sf(f, df_between, df_within)?)
    };

    let (group_means, group_medians, group_sds) = group_summaries(groups);
    Ok(TestResult {
        test_kind: TestKind::Anova,
        statistic,
        p_value,
        stars: stars(p_value),
        diff_of_means: diff_of_means(&group_means),
        group_means,
        group_medians,
        group_sds,
    })
}
