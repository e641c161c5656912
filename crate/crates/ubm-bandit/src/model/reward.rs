//! List-level rewards and ranked selections.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::model::{ArmId, Context, PositionWeights};

/// Whether the user clicked anything in the list.
pub fn set_reward(clicks: &[bool]) -> bool {
    clicks.iter().any(|&c| c)
}

/// Probability that a list earns at least one click when position `k` draws
/// attention `w[k][0]` before any click has happened and item `k` attracts
/// with probability `γ_k`:
///
/// ```text
/// E[F] = 1 − Π_{k=1..len}(1 − γ_k·w[k][0])
/// ```
///
/// `attractiveness` holds `γ_1..γ_len` for positions `1..=len` with
/// `1 ≤ len ≤ K`.
pub fn expected_set_reward(attractiveness: &[f64], weights: &PositionWeights) -> Result<f64> {
    if attractiveness.is_empty() || attractiveness.len() > weights.k() {
        return Err(Error::invalid(format!(
            "need between 1 and {} attractiveness values, got {}",
            weights.k(),
            attractiveness.len()
        )));
    }
    let mut miss = 1.0;
    for (i, &gamma) in attractiveness.iter().enumerate() {
        if !(0.0..=1.0).contains(&gamma) || !gamma.is_finite() {
            return Err(Error::invalid(format!(
                "attractiveness {gamma} at position {} is outside [0, 1]",
                i + 1
            )));
        }
        miss *= 1.0 - gamma * weights.w(i + 1, 0)?;
    }
    Ok(1.0 - miss)
}

/// Indices of the `k` largest attractiveness values, best first, ties broken
/// by lower index. Placing items in this order maximizes
/// [`expected_set_reward`] for any monotone weight table.
pub fn top_k_by_attractiveness(attractiveness: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > attractiveness.len() {
        return Err(Error::invalid(format!(
            "cannot take top {k} of {} values",
            attractiveness.len()
        )));
    }
    let mut order: Vec<usize> = (0..attractiveness.len()).collect();
    order.sort_by(|&i, &j| {
        attractiveness[j]
            .total_cmp(&attractiveness[i])
            .then(i.cmp(&j))
    });
    order.truncate(k);
    Ok(order)
}

/// An ordered list of chosen arms with their selection scores and contexts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    arms: Vec<ArmId>,
    scores: Vec<f64>,
    contexts: Vec<Context>,
}

impl SelectionResult {
    /// Builds a selection, enforcing distinct arms, aligned lengths, and
    /// scores that never increase down the list.
    pub fn new(arms: Vec<ArmId>, scores: Vec<f64>, contexts: Vec<Context>) -> Result<Self> {
        if arms.is_empty() {
            return Err(Error::invalid("selection must contain at least one arm"));
        }
        if scores.len() != arms.len() || contexts.len() != arms.len() {
            return Err(Error::invalid(format!(
                "selection fields must align: {} arms, {} scores, {} contexts",
                arms.len(),
                scores.len(),
                contexts.len()
            )));
        }
        let mut seen = HashSet::new();
        if !arms.iter().all(|a| seen.insert(*a)) {
            return Err(Error::invalid("selection arms must be distinct"));
        }
        for pair in scores.windows(2) {
            if pair[1] > pair[0] {
                return Err(Error::invalid(
                    "selection scores must be non-increasing down the list",
                ));
            }
        }
        Ok(SelectionResult { arms, scores, contexts })
    }

    /// Number of positions.
    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    /// Chosen arms, best-scored first.
    pub fn arms(&self) -> &[ArmId] {
        &self.arms
    }

    /// Selection score of each position.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Context of each chosen arm, aligned with [`SelectionResult::arms`].
    pub fn contexts(&self) -> &[Context] {
        &self.contexts
    }
}
