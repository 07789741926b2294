//! Reference confidence scores computed from classifier outputs or features.

use crate::error::{Error, Result};

/// Inputs may drift from the simplex by this much before being rejected.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    /// Validates and renormalizes. Entries must be finite and non-negative
    /// and sum to one within [`SIMPLEX_TOL`].
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("empty probability vector"));
        }
        if let Some(i) = probs.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid(format!(
                "probability {} at position {i} is not a finite non-negative number",
                probs[i]
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        // leave rounding-level drift alone so exact inputs stay exact
        if (total - 1.0).abs() <= probs.len() as f64 * f64::EPSILON {
            return Ok(ProbabilityVector(probs));
        }
        Ok(ProbabilityVector(probs.into_iter().map(|p| p / total).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }
}

/// Largest class probability.
pub fn maxprob(probs: &ProbabilityVector) -> f64 {
    probs.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `1 + Σ p ln p / ln K`, one minus the normalized entropy.
pub fn entropy_score(probs: &ProbabilityVector) -> Result<f64> {
    let k = probs.len();
    if k < 2 {
        return Err(Error::invalid("entropy score needs at least two classes"));
    }
    let neg_entropy: f64 = probs.0.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum();
    Ok((1.0 + neg_entropy / (k as f64).ln()).clamp(0.0, 1.0))
}

/// `(1 + cos(x, centroid)) / 2`
pub fn cossim(x: &[f64], centroid: &[f64]) -> Result<f64> {
    if x.len() != centroid.len() {
        return Err(Error::DimensionMismatch {
            expected: centroid.len(),
            actual: x.len(),
        });
    }
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nc = centroid.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nx == 0.0 || nc == 0.0 {
        return Err(Error::invalid("cosine similarity of a zero vector"));
    }
    let dot: f64 = x.iter().zip(centroid).map(|(a, b)| a * b).sum();
    Ok((0.5 * (1.0 + dot / (nx * nc))).clamp(0.0, 1.0))
}
