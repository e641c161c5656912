//! Arm identifiers and feature contexts.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// Identifier of an arm (item). Ordering is used to break score ties
/// deterministically, lowest id first.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct ArmId(pub u64);

impl fmt::Display for ArmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for ArmId {
    fn from(v: u64) -> Self {
        ArmId(v)
    }
}

/// A feature vector describing one arm in one round.
///
/// Entries must be finite and the Euclidean norm is kept at most 1: vectors
/// longer than unit norm are scaled down on construction, so downstream
/// confidence-width math can rely on `‖x‖ ≤ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Context(Vec<f64>);

impl Context {
    /// Builds a context, rejecting non-finite entries and rescaling any
    /// vector with Euclidean norm above 1 back onto the unit ball.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("context entries must be finite"));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1.0 {
            return Ok(Context(values.into_iter().map(|v| v / norm).collect()));
        }
        Ok(Context(values))
    }

    /// The all-zero context of dimension `d` (norm 0).
    pub fn zeros(d: usize) -> Self {
        Context(vec![0.0; d])
    }

    /// Number of features.
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Feature values.
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Euclidean norm (always ≤ 1 by construction).
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Inner product with a raw coefficient slice of the same dimension.
    pub fn dot(&self, other: &[f64]) -> Result<f64> {
        if other.len() != self.0.len() {
            return Err(Error::DimensionMismatch {
                expected: self.0.len(),
                got: other.len(),
            });
        }
        Ok(self.0.iter().zip(other).map(|(a, b)| a * b).sum())
    }
}
