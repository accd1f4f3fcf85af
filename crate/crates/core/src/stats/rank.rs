//! Rank-based two-group and k-group tests on mid-ranks: the two-sided
//! rank-sum test (exact enumeration or tie-corrected normal approximation)
//! and the Kruskal-Wallis H test with tie-corrected divisor.

use super::kendall::PValueMode;
use super::{diff_of_means, group_summaries, stars, StatsError, TestKind, TestResult};
use crate::special::{chi2_sf, normal_two_sided_p};

/// Route and correction knobs; defaults follow the documented behavior
/// (exact when min group size <= 10 and the pooled data is tie-free).
#[derive(Debug, Clone, Copy)]
pub struct RankConfig {
    pub mode: PValueMode,
    pub continuity_correction: bool,
    /// Largest min(|a|,|b|) for which `Auto` takes the exact route.
    pub exact_max: usize,
}

impl Default for RankConfig {
    fn default() -> Self {
        RankConfig {
            mode: PValueMode::Auto,
            continuity_correction: true,
            exact_max: 10,
        }
    }
}

pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    wilcoxon_rank_sum_with(a, b, RankConfig::default())
}

pub fn wilcoxon_rank_sum_with(
    a: &[f64],
    b: &[f64],
    cfg: RankConfig,
) -> Result<TestResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptyGroup);
    }
    let (m, n) = (a.len(), b.len());
    let total = m + n;
    if total < 3 {
        return Err(StatsError::TooFew { needed: 3, got: total });
    }

    let mut pooled = Vec::with_capacity(total);
    pooled.extend_from_slice(a);
    pooled.extend_from_slice(b);
    let ranks = midranks(&pooled);
    let w: f64 = ranks[..m].iter().sum();
    let u = w - (m * (m + 1)) as f64 / 2.0;
    let tie_cubes = tie_cube_sum(&pooled);
    let has_ties = tie_cubes > 0.0;

    let exact = match cfg.mode {
        PValueMode::Exact => true,
        PValueMode::Approximate => false,
        PValueMode::Auto => m.min(n) <= cfg.exact_max && !has_ties,
    };
    let p_value = if exact {
        // mid-ranks in half units are exact integers
        let ranks2: Vec<i64> = ranks.iter().map(|r| (2.0 * r) as i64).collect();
        exact_p(&ranks2, m, (2.0 * w) as i64)
    } else {
        approx_p(&ranks, m, n, tie_cubes, cfg.continuity_correction)
    };

    let groups = [a.to_vec(), b.to_vec()];
    let (group_means, group_medians, group_sds) = group_summaries(&groups);
    Ok(TestResult {
        test_kind: TestKind::Wilcoxon,
        statistic: u,
        p_value,
        stars: stars(p_value),
        diff_of_means: diff_of_means(&group_means),
        group_means,
        group_medians,
        group_sds,
    })
}

pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<TestResult, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFew { needed: 2, got: groups.len() });
    }
    if groups.iter().any(|g| g.is_empty()) {
        return Err(StatsError::EmptyGroup);
    }
    let n_total: usize = groups.iter().map(|g| g.len()).sum();
    if n_total < 4 {
        return Err(StatsError::TooFew { needed: 4, got: n_total });
    }

    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let ranks = midranks(&pooled);
    let nf = n_total as f64;
    let divisor = 1.0 - tie_cube_sum(&pooled) / (nf * nf * nf - nf);
    if divisor <= 0.0 {
        return Err(StatsError::AllTied);
    }

    let mut h = 0.0;
    let mut offset = 0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        h += r * r / g.len() as f64;
        offset += g.len();
    }
    h = (12.0 / (nf * (nf + 1.0)) * h - 3.0 * (nf + 1.0)) / divisor;
    h = h.max(0.0); // guard float dust on near-null data
    let df = (groups.len() - 1) as f64;
    let p_value = chi2_sf(h, df)?;

    let (group_means, group_medians, group_sds) = group_summaries(groups);
    Ok(TestResult {
        test_kind: TestKind::KruskalWallis,
        statistic: h,
        p_value,
        stars: stars(p_value),
        diff_of_means: diff_of_means(&group_means),
        group_means,
        group_medians,
        group_sds,
    })
}

/// Mid-ranks (1-based; ties get the average of their rank range).
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < values.len() {
        let mut j = i + 1;
        while j < values.len() && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Sum of t^3 - t over tie groups of the pooled sample.
fn tie_cube_sum(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut s = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        s += t * t * t - t;
        i = j;
    }
    s
}

/// Exact two-sided p: the share of equally likely size-m subsets of the
/// pooled mid-ranks whose rank sum deviates from its mean at least as much
/// as observed. Subset counts come from a subset-sum table over half-unit
/// ranks, so ties cost nothing extra. Cost grows as O(N^2 m^2); meant for
/// small samples.
fn exact_p(ranks2: &[i64], m: usize, w2_obs: i64) -> f64 {
    let n_total = ranks2.len();
    let center2 = (m * (n_total + 1)) as i64;
    let dev_obs = (w2_obs - center2).abs();

    let mut desc: Vec<i64> = ranks2.to_vec();
    desc.sort_unstable_by(|a, b| b.cmp(a));
    let smax: i64 = desc[..m].iter().sum();

    // dp[k][s] = number of size-k subsets with half-unit rank sum s; counts
    // stay well under 2^53 for any size this route is used at
    let width = smax as usize + 1;
    let mut dp = vec![vec![0.0f64; width]; m + 1];
    dp[0][0] = 1.0;
    for &r in ranks2 {
        let r = r as usize;
        for k in (0..m).rev() {
            for s in 0..width - r {
                if dp[k][s] != 0.0 {
                    let add = dp[k][s];
                    dp[k + 1][s + r] += add;
                }
            }
        }
    }
    let total: f64 = dp[m].iter().sum();
    let extreme: f64 = dp[m]
        .iter()
        .enumerate()
        .filter(|&(s, _)| (s as i64 - center2).abs() >= dev_obs)
        .map(|(_, c)| c)
        .sum();
    extreme / total
}

/// Normal approximation with tie-corrected variance.
fn approx_p(ranks: &[f64], m: usize, n: usize, tie_cubes: f64, continuity: bool) -> f64 {
    let w: f64 = ranks[..m].iter().sum();
    let (mf, nf) = (m as f64, n as f64);
    let total = mf + nf;
    let expected = mf * (total + 1.0) / 2.0;
    let var = mf * nf / 12.0 * ((total + 1.0) - tie_cubes / (total * (total - 1.0)));
    if var <= 0.0 {
        return 1.0; // every pooled value tied: no rank information
    }
    let cc = if continuity { 0.5 } else { 0.0 };
    let z = ((w - expected).abs() - cc).max(0.0) / var.sqrt();
    normal_two_sided_p(z).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_groups_exact_p() {
        // only the two fully separated assignments are as extreme: 2/C(6,3)
        let r = wilcoxon_rank_sum(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((r.p_value - 0.1).abs() < 1e-15);
        assert_eq!(r.statistic, 0.0); // no pair with a > b
        assert!((r.diff_of_means - (2.0 - 5.0)).abs() < 1e-15);
    }

    #[test]
    fn identical_groups_are_null() {
        let g = [1.0, 2.0, 2.0, 3.0, 5.0];
        let r = wilcoxon_rank_sum(&g, &g).unwrap();
        assert!(r.p_value >= 0.99);
        assert_eq!(r.stars, super::super::Stars::None);
        // U for identical multisets is mn/2
        assert!((r.statistic - 12.5).abs() < 1e-12);
    }

    #[test]
    fn statistic_is_pair_count() {
        // U = #{(a,b): a > b} + 0.5 #{a = b}
        let a = [3.0, 1.0, 4.0, 1.0];
        let b = [2.0, 7.0, 1.0];
        let r = wilcoxon_rank_sum(&a, &b).unwrap();
        let mut u = 0.0;
        for &x in &a {
            for &y in &b {
                if x > y {
                    u += 1.0;
                } else if x == y {
                    u += 0.5;
                }
            }
        }
        assert!((r.statistic - u).abs() < 1e-12);
    }

    #[test]
    fn forced_routes_agree_on_moderate_separation() {
        let a = [1.0, 4.0, 2.0, 6.0, 3.0, 8.0];
        let b = [5.0, 9.0, 7.0, 11.0, 10.0, 12.0];
        let exact = wilcoxon_rank_sum_with(
            &a,
            &b,
            RankConfig { mode: PValueMode::Exact, ..RankConfig::default() },
        )
        .unwrap();
        let approx = wilcoxon_rank_sum_with(
            &a,
            &b,
            RankConfig { mode: PValueMode::Approximate, ..RankConfig::default() },
        )
        .unwrap();
        assert!((exact.p_value - approx.p_value).abs() < 0.02);
        assert_eq!(exact.statistic, approx.statistic);
    }

    #[test]
    fn empty_group_rejected() {
        assert!(matches!(
            wilcoxon_rank_sum(&[], &[1.0, 2.0]),
            Err(StatsError::EmptyGroup)
        ));
        assert!(matches!(
            kruskal_wallis(&[vec![1.0], vec![]]),
            Err(StatsError::EmptyGroup)
        ));
    }

    #[test]
    fn kruskal_wallis_worked_value() {
        let groups = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        let r = kruskal_wallis(&groups).unwrap();
        assert!((r.statistic - 32.0 / 7.0).abs() < 1e-12);
        assert!((r.statistic - 4.5714).abs() < 5e-5);
        assert!((r.p_value - (-r.statistic / 2.0).exp()).abs() < 1e-12);
        assert!((r.p_value - 0.1017).abs() < 5e-5);
    }

    #[test]
    fn kruskal_wallis_identical_groups() {
        let groups = vec![vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]];
        let r = kruskal_wallis(&groups).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kruskal_wallis_all_tied() {
        let groups = vec![vec![2.0, 2.0], vec![2.0, 2.0]];
        assert!(matches!(kruskal_wallis(&groups), Err(StatsError::AllTied)));
    }

    #[test]
    fn max_pairwise_diff_of_means() {
        // means 0.422, 0.383, 0.339 -> max pairwise 0.083
        let groups = vec![vec![0.422], vec![0.383], vec![0.339]];
        let means: Vec<f64> = groups.iter().map(|g| g[0]).collect();
        assert!((diff_of_means(&means) - 0.083).abs() < 1e-12);
    }

    #[test]
    fn midranks_average_ties() {
        let r = midranks(&[10.0, 20.0, 20.0, 30.0]);
        assert_eq!(r, vec![1.0, 2.5, 2.5, 4.0]);
    }
}
