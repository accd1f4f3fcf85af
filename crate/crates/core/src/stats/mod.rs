//! Nonparametric test battery: Kendall rank correlation, normalized cosine
//! similarity, Wilcoxon rank-sum, Kruskal-Wallis, one-way ANOVA, and the
//! three-level significance stars shared by all of them.

mod anova;
mod cosine;
mod kendall;
mod matrix;
mod rank;

pub use anova::anova_one_way;
pub use cosine::{cosine_similarity_normalized, SimilarityResult};
pub use kendall::{kendall_tau_b, kendall_tau_b_with_mode, CorrelationResult, PValueMode};
pub use matrix::{correlation_matrix, CorrelationMatrix, MatrixCell};
pub use rank::{kruskal_wallis, wilcoxon_rank_sum, wilcoxon_rank_sum_with, RankConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("sequences have different lengths ({x} vs {y})")]
    LengthMismatch { x: usize, y: usize },
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("all values tied; statistic undefined")]
    AllTied,
    #[error("constant vector; min-max normalization undefined")]
    ConstantVector,
    #[error("empty group")]
    EmptyGroup,
    #[error(transparent)]
    Special(#[from] crate::special::SpecialError),
}

/// Significance levels p < 0.05 / 0.01 / 0.001, strict at every boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stars {
    #[serde(rename = "")]
    None,
    #[serde(rename = "*")]
    One,
    #[serde(rename = "**")]
    Two,
    #[serde(rename = "***")]
    Three,
}

impl Stars {
    pub fn as_str(self) -> &'static str {
        match self {
            Stars::None => "",
            Stars::One => "*",
            Stars::Two => "**",
            Stars::Three => "***",
        }
    }
}

impl std::fmt::Display for Stars {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn stars(p: f64) -> Stars {
    if p < 0.001 {
        Stars::Three
    } else if p < 0.01 {
        Stars::Two
    } else if p < 0.05 {
        Stars::One
    } else {
        Stars::None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Wilcoxon,
    KruskalWallis,
    Anova,
}

/// Outcome of one between-group test over a single rating column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestResult {
    pub test_kind: TestKind,
    pub statistic: f64,
    pub p_value: f64,
    pub stars: Stars,
    /// Signed M1 - M2 for two groups; max over ordered pairs (Mi - Mj, i < j)
    /// for three.
    pub diff_of_means: f64,
    pub group_means: Vec<f64>,
    pub group_medians: Vec<f64>,
    pub group_sds: Vec<f64>,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Sample standard deviation (n-1 denominator); 0 for fewer than 2 values.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|&x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Max over ordered pair differences Mi - Mj (i < j); the signed M1 - M2 for
/// two groups.
pub(crate) fn diff_of_means(means: &[f64]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for i in 0..means.len() {
        for j in i + 1..means.len() {
            best = best.max(means[i] - means[j]);
        }
    }
    best
}

pub(crate) fn group_summaries(groups: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let means: Vec<f64> = groups.iter().map(|g| mean(g)).collect();
    let medians: Vec<f64> = groups.iter().map(|g| median(g)).collect();
    let sds: Vec<f64> = groups.iter().map(|g| sample_sd(g)).collect();
    (means, medians, sds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stars_boundaries_are_strict() {
        assert_eq!(stars(0.0009), Stars::Three);
        assert_eq!(stars(0.001), Stars::Two);
        assert_eq!(stars(0.001105), Stars::Two);
        assert_eq!(stars(0.01), Stars::One);
        assert_eq!(stars(0.049999), Stars::One);
        assert_eq!(stars(0.05), Stars::None);
        assert_eq!(stars(1.0), Stars::None);
        assert_eq!(stars(0.0), Stars::Three);
    }

    #[test]
    fn stars_serialize_as_symbols() {
        assert_eq!(serde_json::to_string(&Stars::Two).unwrap(), "\"**\"");
        assert_eq!(serde_json::to_string(&Stars::None).unwrap(), "\"\"");
        let s: Stars = serde_json::from_str("\"***\"").unwrap();
        assert_eq!(s, Stars::Three);
    }

    #[test]
    fn summary_helpers() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!((sample_sd(&[2.0, 4.0]) - std::f64::consts::SQRT_2).abs() < 1e-15);
        assert_eq!(sample_sd(&[5.0]), 0.0);
    }

    #[test]
    fn diff_of_means_formula() {
        assert_eq!(diff_of_means(&[0.5, 0.3]), 0.2);
        assert!((diff_of_means(&[0.3, 0.5]) - -0.2).abs() < 1e-15);
        // max{M1-M3, M1-M2, M2-M3}
        let d = diff_of_means(&[0.422, 0.383, 0.339]);
        assert!((d - 0.083).abs() < 1e-12);
        // ascending means: all pair differences negative, max is the least negative
        let d = diff_of_means(&[0.3, 0.4, 0.5]);
        assert!((d - -0.1).abs() < 1e-15);
    }
}
