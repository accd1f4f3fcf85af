//! Cosine similarity on min-max normalized, mean-centered vectors.

use super::StatsError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityResult {
    pub cosine: f64,
}

/// Each input is independently rescaled to [0,1] by (x - min)/(max - min),
/// then shifted so its mean sits at zero; the result is the cosine of the
/// two centered vectors.
pub fn cosine_similarity_normalized(
    x: &[f64],
    y: &[f64],
) -> Result<SimilarityResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch { x: x.len(), y: y.len() });
    }
    if x.len() < 2 {
        return Err(StatsError::TooFew { needed: 2, got: x.len() });
    }
    let cx = centered(x)?;
    let cy = centered(y)?;
    let dot: f64 = cx.iter().zip(&cy).map(|(a, b)| a * b).sum();
    let nx: f64 = cx.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny: f64 = cy.iter().map(|a| a * a).sum::<f64>().sqrt();
    Ok(SimilarityResult { cosine: dot / (nx * ny) })
}

fn centered(v: &[f64]) -> Result<Vec<f64>, StatsError> {
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Err(StatsError::ConstantVector);
    }
    let scaled: Vec<f64> = v.iter().map(|&a| (a - min) / (max - min)).collect();
    let mean = scaled.iter().sum::<f64>() / scaled.len() as f64;
    Ok(scaled.iter().map(|&a| a - mean).collect())
}
