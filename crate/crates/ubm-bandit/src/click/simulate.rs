//! Generative click simulators for four browsing models.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::PositionWeights;
use crate::rng;

/// How a simulated user scans a list and produces clicks.
#[derive(Debug, Clone, PartialEq)]
pub enum ClickModel {
    /// Examination depends on position and last click: position `k` with
    /// last click at `k'` is examined with probability `w[k][k']`, and an
    /// examined item is clicked with its attractiveness.
    Ubm,
    /// Position-based: position `k` is examined with `w[k][0]` regardless of
    /// earlier clicks.
    Pbm,
    /// Cascade: the user scans top to bottom, clicks the first attractive
    /// item, and stops — one click at most.
    Cascade,
    /// Dependent-click: like the cascade, but after clicking position `k`
    /// the user continues with probability `1 − satisfaction[k−1]`.
    Dcm {
        /// Per-position satisfaction rates in `[0, 1]`.
        satisfaction: Vec<f64>,
    },
}

impl ClickModel {
    fn validate(&self, n_positions: usize, weights: &PositionWeights) -> Result<()> {
        if n_positions == 0 || n_positions > weights.k() {
            return Err(Error::invalid(format!(
                "need between 1 and {} attractiveness values, got {n_positions}",
                weights.k()
            )));
        }
        if let ClickModel::Dcm { satisfaction } = self {
            if satisfaction.len() < n_positions {
                return Err(Error::DimensionMismatch {
                    expected: n_positions,
                    got: satisfaction.len(),
                });
            }
            if satisfaction
                .iter()
                .any(|s| !(0.0..=1.0).contains(s) || !s.is_finite())
            {
                return Err(Error::invalid("satisfaction rates must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Click probability of one slot under the browsing model:
/// `w[k][k']·gamma` for position `k` with last click at `k'`.
pub fn ubm_click_prob(
    gamma: f64,
    k: usize,
    k_prime: usize,
    weights: &PositionWeights,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&gamma) || !gamma.is_finite() {
        return Err(Error::invalid(format!(
            "attractiveness {gamma} is outside [0, 1]"
        )));
    }
    Ok(weights.w(k, k_prime)? * gamma)
}

/// Draws one session's click vector from the model's generative law.
///
/// `attractiveness[i]` is the `γ` of the item at position `i + 1`; the
/// returned vector has one entry per position. Sampling consumes the
/// generator position-by-position, so a fixed generator state yields a fixed
/// outcome.
pub fn simulate_session<R: Rng>(
    model: &ClickModel,
    attractiveness: &[f64],
    weights: &PositionWeights,
    rng: &mut R,
) -> Result<Vec<bool>> {
    model.validate(attractiveness.len(), weights)?;
    for &g in attractiveness {
        if !(0.0..=1.0).contains(&g) || !g.is_finite() {
            return Err(Error::invalid(format!(
                "attractiveness {g} is outside [0, 1]"
            )));
        }
    }
    let n = attractiveness.len();
    let mut clicks = vec![false; n];
    match model {
        ClickModel::Ubm => {
            let mut last = 0usize;
            for k in 1..=n {
                let p = weights.w(k, last)? * attractiveness[k - 1];
                if rng.gen::<f64>() < p {
                    clicks[k - 1] = true;
                    last = k;
                }
            }
        }
        ClickModel::Pbm => {
            for k in 1..=n {
                let p = weights.w(k, 0)? * attractiveness[k - 1];
                clicks[k - 1] = rng.gen::<f64>() < p;
            }
        }
        ClickModel::Cascade => {
            for k in 1..=n {
                if rng.gen::<f64>() < attractiveness[k - 1] {
                    clicks[k - 1] = true;
                    break;
                }
            }
        }
        ClickModel::Dcm { satisfaction } => {
            for k in 1..=n {
                if rng.gen::<f64>() < attractiveness[k - 1] {
                    clicks[k - 1] = true;
                    let stop = rng.gen::<f64>() < satisfaction[k - 1];
                    if stop {
                        break;
                    }
                }
            }
        }
    }
    Ok(clicks)
}

/// [`simulate_session`] as a pure function of a seed.
pub fn simulate_session_seeded(
    model: &ClickModel,
    attractiveness: &[f64],
    weights: &PositionWeights,
    seed: u64,
) -> Result<Vec<bool>> {
    let mut r = rng::from_seed(seed);
    simulate_session(model, attractiveness, weights, &mut r)
}

/// Exact marginal click probability of each position under the model's law.
///
/// Serves as the analytic counterpart of [`simulate_session`]:
///
/// - browsing model: total probability over the last-click position,
///   tracked by dynamic programming;
/// - position-based: `γ_k·w[k][0]`;
/// - cascade: `γ_k·Π_{j<k}(1 − γ_j)`;
/// - dependent-click: `γ_k·Π_{j<k}(1 − γ_j·sat_j)`.
pub fn exact_click_marginals(
    model: &ClickModel,
    attractiveness: &[f64],
    weights: &PositionWeights,
) -> Result<Vec<f64>> {
    model.validate(attractiveness.len(), weights)?;
    let n = attractiveness.len();
    let mut out = Vec::with_capacity(n);
    match model {
        ClickModel::Ubm => {
            // state[l] = P(last click so far is at position l), l = 0 meaning
            // no click yet.
            let mut state = vec![0.0; n + 1];
            state[0] = 1.0;
            for k in 1..=n {
                let gamma = attractiveness[k - 1];
                let mut click_prob = 0.0;
                for (l, slot) in state.iter_mut().enumerate().take(k) {
                    let mass = *slot * weights.w(k, l)? * gamma;
                    click_prob += mass;
                    *slot -= mass;
                }
                state[k] = click_prob;
                out.push(click_prob);
            }
        }
        ClickModel::Pbm => {
            for k in 1..=n {
                out.push(weights.w(k, 0)? * attractiveness[k - 1]);
            }
        }
        ClickModel::Cascade => {
            let mut reach = 1.0;
            for &gamma in attractiveness {
                out.push(reach * gamma);
                reach *= 1.0 - gamma;
            }
        }
        ClickModel::Dcm { satisfaction } => {
            let mut reach = 1.0;
            for (i, &gamma) in attractiveness.iter().enumerate() {
                out.push(reach * gamma);
                reach *= 1.0 - gamma * satisfaction[i];
            }
        }
    }
    Ok(out)
}
