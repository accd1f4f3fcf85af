//! Two- and three-group partitions of a cohort by one background question,
//! plus the pure-chance classification baseline.
//!
//! Threshold semantics are half-open everywhere: with ascending cuts
//! c1 < c2 < ..., group k is [c_k, c_{k+1}) with sentinel outer bounds, i.e.
//! a respondent's group index is the number of cuts <= their answer.

use crate::dataset::{Bq, Cohort};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grouping {
    pub bq: Bq,
    pub arity: usize,
    /// Ascending cut values; arity-1 of them.
    pub thresholds: Vec<i64>,
    /// Per-respondent group index, cohort order.
    pub labels: Vec<usize>,
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChanceBaseline {
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GroupingError {
    #[error("degenerate grouping on {bq}: {reason}")]
    Degenerate { bq: Bq, reason: String },
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
    #[error("invalid grouping config: {0}")]
    InvalidConfig(String),
}

impl Grouping {
    /// Ratings of one expression statement split by group label.
    pub fn split_ratings(&self, cohort: &Cohort, es: usize) -> Vec<Vec<f64>> {
        assert_eq!(self.labels.len(), cohort.len(), "grouping/cohort mismatch");
        let mut out: Vec<Vec<f64>> = (0..self.arity)
            .map(|g| Vec::with_capacity(self.sizes[g]))
            .collect();
        for (r, &label) in cohort.respondents.iter().zip(&self.labels) {
            out[label].push(r.ratings[es]);
        }
        out
    }

    /// Human-readable threshold description, e.g. "x<7" / "6<=x<8" / "x>=8".
    pub fn range_label(&self, group: usize) -> String {
        let lo = group.checked_sub(1).map(|i| self.thresholds[i]);
        let hi = self.thresholds.get(group);
        match (lo, hi) {
            (None, Some(h)) => format!("x<{h}"),
            (Some(l), Some(h)) => format!("{l}<=x<{h}"),
            (Some(l), None) => format!("x>={l}"),
            (None, None) => "all".into(),
        }
    }
}

fn build(bq: Bq, cuts: Vec<i64>, answers: &[i64]) -> Result<Grouping, GroupingError> {
    let arity = cuts.len() + 1;
    let labels: Vec<usize> = answers
        .iter()
        .map(|&a| cuts.iter().filter(|&&c| c <= a).count())
        .collect();
    let mut sizes = vec![0usize; arity];
    for &l in &labels {
        sizes[l] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(GroupingError::Degenerate {
            bq,
            reason: format!("group {empty} is empty for cuts {cuts:?}"),
        });
    }
    Ok(Grouping { bq, arity, thresholds: cuts, labels, sizes })
}

/// Group 0: answer strictly below the mean answer; group 1: the rest.
/// The recorded threshold is the equivalent integer cut.
pub fn group_two_by_mean(cohort: &Cohort, bq: Bq) -> Result<Grouping, GroupingError> {
    let answers = cohort.background_column(bq);
    let mean = answers.iter().sum::<i64>() as f64 / answers.len() as f64;
    // for integer answers, x < mean is x < cut with this integer cut
    let cut = if mean.fract() == 0.0 { mean as i64 } else { mean.floor() as i64 + 1 };
    build(bq, vec![cut], &answers)
}

/// The contiguous three-way split minimizing (max size - min size), ties
/// going to the lexicographically smallest cut pair. Exhaustive over cut
/// pairs drawn from the distinct answer values.
pub fn group_three_most_even(cohort: &Cohort, bq: Bq) -> Result<Grouping, GroupingError> {
    let answers = cohort.background_column(bq);
    let mut distinct = answers.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(GroupingError::Degenerate {
            bq,
            reason: format!("{} distinct values, need 3", distinct.len()),
        });
    }

    let count_below = |cut: i64| answers.iter().filter(|&&a| a < cut).count();
    let n = answers.len();
    let mut best: Option<((i64, i64), usize)> = None;
    for (i, &a) in distinct.iter().enumerate().skip(1) {
        for &b in &distinct[i + 1..] {
            let n1 = count_below(a);
            let n2 = count_below(b) - n1;
            let n3 = n - n1 - n2;
            let spread = n1.max(n2).max(n3) - n1.min(n2).min(n3);
            let better = match best {
                None => true,
                Some((cuts, s)) => spread < s || (spread == s && (a, b) < cuts),
            };
            if better {
                best = Some(((a, b), spread));
            }
        }
    }
    let ((a, b), _) = best.expect("at least one cut pair exists");
    build(bq, vec![a, b], &answers)
}

pub fn group_by_explicit_thresholds(
    cohort: &Cohort,
    bq: Bq,
    cuts: &[i64],
) -> Result<Grouping, GroupingError> {
    if cuts.is_empty() || cuts.len() > 2 {
        return Err(GroupingError::InvalidThresholds(format!(
            "need 1 or 2 cuts, got {}",
            cuts.len()
        )));
    }
    if cuts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(GroupingError::InvalidThresholds(format!(
            "cuts must be strictly ascending, got {cuts:?}"
        )));
    }
    build(bq, cuts.to_vec(), &cohort.background_column(bq))
}

pub fn chance_baseline(g: &Grouping) -> ChanceBaseline {
    let total: usize = g.sizes.iter().sum();
    let max = *g.sizes.iter().max().expect("non-empty sizes");
    ChanceBaseline { value: max as f64 / total as f64 }
}

/// One grouping request: explicit ascending cuts, or "auto" for the
/// mean rule (arity 2) / most-even rule (arity 3).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingRequest {
    pub bq: Bq,
    pub arity: usize,
    pub cuts: CutsSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CutsSpec {
    Explicit(Vec<i64>),
    Auto(String),
}

pub fn parse_grouping_config(json: &str) -> Result<Vec<GroupingRequest>, GroupingError> {
    let entries: Vec<GroupingRequest> =
        serde_json::from_str(json).map_err(|e| GroupingError::InvalidConfig(e.to_string()))?;
    for e in &entries {
        if e.arity != 2 && e.arity != 3 {
            return Err(GroupingError::InvalidConfig(format!(
                "{}: arity must be 2 or 3, got {}",
                e.bq, e.arity
            )));
        }
        match &e.cuts {
            CutsSpec::Auto(tag) if tag != "auto" => {
                return Err(GroupingError::InvalidConfig(format!(
                    "{}: cuts must be an array or the string \"auto\", got {tag:?}",
                    e.bq
                )));
            }
            CutsSpec::Explicit(c) if c.len() + 1 != e.arity => {
                return Err(GroupingError::InvalidConfig(format!(
                    "{}: arity {} needs {} cuts, got {}",
                    e.bq,
                    e.arity,
                    e.arity - 1,
                    c.len()
                )));
            }
            _ => {}
        }
    }
    Ok(entries)
}

pub fn apply_request(cohort: &Cohort, req: &GroupingRequest) -> Result<Grouping, GroupingError> {
    match (&req.cuts, req.arity) {
        (CutsSpec::Explicit(c), _) => group_by_explicit_thresholds(cohort, req.bq, c),
        (CutsSpec::Auto(_), 2) => group_two_by_mean(cohort, req.bq),
        (CutsSpec::Auto(_), 3) => group_three_most_even(cohort, req.bq),
        (CutsSpec::Auto(_), a) => Err(GroupingError::InvalidConfig(format!(
            "auto rule undefined for arity {a}"
        ))),
    }
}

/// The 13 published grouping rows as explicit thresholds.
pub const DEFAULT_GROUPINGS_JSON: &str = include_str!("../data/default_groupings.json");

pub fn default_groupings() -> Vec<GroupingRequest> {
    parse_grouping_config(DEFAULT_GROUPINGS_JSON).expect("embedded config is valid")
}
