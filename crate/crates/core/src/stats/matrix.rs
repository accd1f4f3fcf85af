//! Pairwise Kendall/cosine matrix over the rating statements and the
//! ordinal background questions.

use super::cosine::cosine_similarity_normalized;
use super::kendall::kendall_tau_b;
use crate::dataset::{Bq, Cohort};
use serde::{Deserialize, Serialize};

/// One pair's measures; a field is None when that measure is undefined for
/// the pair (constant column, degenerate test), which renders as a flagged
/// cell rather than failing the whole matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub tau: Option<f64>,
    pub p_value: Option<f64>,
    pub cosine: Option<f64>,
}

impl MatrixCell {
    pub fn is_flagged(&self) -> bool {
        self.tau.is_none() || self.cosine.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    pub cells: Vec<Vec<MatrixCell>>,
}

impl CorrelationMatrix {
    /// Triangular convention used by the published layout: Kendall tau in
    /// the upper-right half, cosine in the lower-left, 1.0 on the diagonal.
    pub fn half_value(&self, row: usize, col: usize) -> Option<f64> {
        use std::cmp::Ordering::*;
        match row.cmp(&col) {
            Less => self.cells[row][col].tau,
            Equal => Some(1.0),
            Greater => self.cells[row][col].cosine,
        }
    }
}

/// All pairs among ES1..ES20 and the ordinal background questions
/// BQ1, BQ5, BQ6, BQ7.
pub fn correlation_matrix(cohort: &Cohort) -> CorrelationMatrix {
    let mut labels = Vec::with_capacity(24);
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(24);
    for es in 0..20 {
        labels.push(format!("ES{}", es + 1));
        columns.push(cohort.rating_column(es));
    }
    for bq in [Bq::Bq1, Bq::Bq5, Bq::Bq6, Bq::Bq7] {
        labels.push(bq.to_string());
        columns.push(cohort.background_column(bq).into_iter().map(|v| v as f64).collect());
    }
    from_columns(labels, &columns)
}

pub fn from_columns(labels: Vec<String>, columns: &[Vec<f64>]) -> CorrelationMatrix {
    let k = columns.len();
    let empty = MatrixCell { tau: None, p_value: None, cosine: None };
    let mut cells = vec![vec![empty; k]; k];
    for i in 0..k {
        cells[i][i] = MatrixCell { tau: Some(1.0), p_value: None, cosine: Some(1.0) };
        for j in i + 1..k {
            let mut cell = empty;
            if let Ok(r) = kendall_tau_b(&columns[i], &columns[j]) {
                cell.tau = Some(r.tau);
                cell.p_value = Some(r.p_value);
            }
            if let Ok(s) = cosine_similarity_normalized(&columns[i], &columns[j]) {
                cell.cosine = Some(s.cosine);
            }
            cells[i][j] = cell;
            cells[j][i] = cell;
        }
    }
    CorrelationMatrix { labels, cells }
}
