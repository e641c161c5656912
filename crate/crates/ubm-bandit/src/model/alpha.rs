//! Exploration-width schedule and regret envelope.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PositionWeights;

/// Parameters of the confidence-width schedule.
///
/// `phi_prime` is the per-round exposure mass (for examination-weighted
/// updates, the sum of squared adjacent-click weights; for unweighted
/// updates, simply `K`). The regularizer must dominate it: `λ ≥ φ'` and
/// `λ ≥ 1`, which [`AlphaParams::for_weights`] guarantees by flooring at 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaParams {
    d: usize,
    k: usize,
    lambda: f64,
    beta: f64,
    phi_prime: f64,
    horizon: u64,
}

/// Cumulative-regret envelope at a given round, reported both as the bare
/// leading term and with the additive `+1` of the full statement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretBound {
    /// `2·α(t)·sqrt(2·t·K·d·ln(1 + φ'·t/(λ·d)))`.
    pub leading: f64,
    /// `leading + 1`.
    pub plus_one: f64,
}

impl AlphaParams {
    /// Builds a schedule from explicit parameters.
    pub fn new(
        d: usize,
        k: usize,
        lambda: f64,
        beta: f64,
        phi_prime: f64,
        horizon: u64,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("feature dimension must be at least 1"));
        }
        if k == 0 {
            return Err(Error::invalid("list length must be at least 1"));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::invalid(format!("beta must be positive, got {beta}")));
        }
        if !(phi_prime.is_finite() && phi_prime >= 0.0) {
            return Err(Error::invalid(format!(
                "exposure mass must be non-negative, got {phi_prime}"
            )));
        }
        if !lambda.is_finite() || lambda < 1.0 || lambda < phi_prime {
            return Err(Error::invalid(format!(
                "lambda = {lambda} must satisfy lambda ≥ 1 and lambda ≥ exposure mass {phi_prime}"
            )));
        }
        if horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        Ok(AlphaParams { d, k, lambda, beta, phi_prime, horizon })
    }

    /// Schedule for examination-weighted updates: `φ' = Σ w[k][k−1]²`,
    /// `λ = max(1, φ')`, `β = d`.
    pub fn for_weights(d: usize, weights: &PositionWeights, horizon: u64) -> Result<Self> {
        let phi = weights.phi_prime();
        AlphaParams::new(d, weights.k(), phi.max(1.0), d as f64, phi, horizon)
    }

    /// Schedule for unweighted updates where every displayed position counts
    /// fully: `φ' = K`, `λ = max(1, K)`, `β = d`.
    pub fn for_uniform_exposure(d: usize, k: usize, horizon: u64) -> Result<Self> {
        let phi = k as f64;
        AlphaParams::new(d, k, phi.max(1.0), d as f64, phi, horizon)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn phi_prime(&self) -> f64 {
        self.phi_prime
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// Exploration width at round `t ≥ 1`:
    /// `sqrt(d·ln(1 + φ'·t/(d·λ)) + 2·ln(t·K)) + sqrt(λ·β)`.
    pub fn alpha(&self, t: u64) -> Result<f64> {
        if t == 0 {
            return Err(Error::invalid("round index starts at 1"));
        }
        let d = self.d as f64;
        let t = t as f64;
        let k = self.k as f64;
        let log_term = d * (1.0 + self.phi_prime * t / (d * self.lambda)).ln() + 2.0 * (t * k).ln();
        Ok(log_term.sqrt() + (self.lambda * self.beta).sqrt())
    }

    /// Cumulative-regret envelope after `t` rounds:
    /// `2·α(t)·sqrt(2·t·K·d·ln(1 + φ'·t/(λ·d)))`, with and without the `+1`.
    pub fn regret_bound(&self, t: u64) -> Result<RegretBound> {
        let alpha = self.alpha(t)?;
        let d = self.d as f64;
        let tf = t as f64;
        let k = self.k as f64;
        let log_term = (1.0 + self.phi_prime * tf / (self.lambda * d)).ln();
        let leading = 2.0 * alpha * (2.0 * tf * k * d * log_term).sqrt();
        Ok(RegretBound { leading, plus_one: leading + 1.0 })
    }
}
