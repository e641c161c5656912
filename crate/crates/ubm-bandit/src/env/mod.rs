//! Synthetic ground-truth environments for end-to-end policy experiments.
//!
//! A [`GroundTruthWorld`] hides a parameter vector θ\* behind a pool of
//! feature vectors: arm `a`'s true attractiveness is `γ(a) = θ*ᵀ x_a`, so a
//! linear policy has something real to learn. Worlds are generated so the
//! standard assumptions hold by construction — `‖θ*‖² ≤ β`, `‖x‖ ≤ 1`,
//! every `γ(a) ∈ [0, 1]` — and every draw is reproducible from the seed.
//!
//! [`run_round`] plays one bandit round against the browsing-model click
//! law, and [`generate_ubm_sessions`] produces logged sessions under a
//! uniformly random logger for the estimation pipeline: session logs feed
//! [`build_attractiveness_matrix`], whose factorization by
//! [`truncated_svd`] yields per-(user, item) features via [`make_context`].

mod features;

pub use features::{
    build_attractiveness_matrix, make_context, read_factorization, read_matrix,
    read_matrix_from, truncated_svd, write_factorization, write_matrix, write_matrix_into,
    AttractivenessMatrix, FeatureFactorization,
};

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::click::{simulate_session, ClickModel, SessionRecord};
use crate::error::{Error, Result};
use crate::model::{top_k_by_attractiveness, ArmId, Context, PositionWeights, SelectionResult};
use crate::policy::{CandidateSet, Policy};
use crate::rng;

/// A fully specified environment: hidden parameter, arm pool, examination
/// weights, horizon, and the seed it was generated from.
#[derive(Debug, Clone)]
pub struct GroundTruthWorld {
    theta_star: DVector<f64>,
    arms: Vec<(ArmId, Context)>,
    weights: PositionWeights,
    horizon: u64,
    seed: u64,
    // Derived caches.
    gammas: Vec<f64>,
    by_gamma_desc: Vec<usize>,
    index_of: BTreeMap<ArmId, usize>,
    candidates: CandidateSet,
}

#[derive(Serialize, Deserialize)]
struct WorldSnapshot {
    theta_star: Vec<f64>,
    arms: Vec<(ArmId, Context)>,
    weights: PositionWeights,
    horizon: u64,
    seed: u64,
}

impl PartialEq for GroundTruthWorld {
    fn eq(&self, other: &Self) -> bool {
        self.theta_star == other.theta_star
            && self.arms == other.arms
            && self.weights == other.weights
            && self.horizon == other.horizon
            && self.seed == other.seed
    }
}

impl GroundTruthWorld {
    /// Builds a world from explicit parts, validating the attractiveness
    /// and norm assumptions. `β` is taken as the feature dimension, matching
    /// the confidence-width configuration used by the policies.
    pub fn new(
        theta_star: Vec<f64>,
        arms: Vec<(ArmId, Context)>,
        weights: PositionWeights,
        horizon: u64,
        seed: u64,
    ) -> Result<Self> {
        if theta_star.is_empty() {
            return Err(Error::invalid("the hidden parameter needs at least one entry"));
        }
        if arms.is_empty() {
            return Err(Error::invalid("the arm pool must not be empty"));
        }
        if horizon == 0 {
            return Err(Error::invalid("the horizon must be at least 1"));
        }
        let theta = DVector::from_vec(theta_star);
        let beta = theta.len() as f64;
        if theta.norm_squared() > beta + 1e-9 {
            return Err(Error::invalid(format!(
                "‖θ*‖² = {} exceeds β = {beta}",
                theta.norm_squared()
            )));
        }
        let mut gammas = Vec::with_capacity(arms.len());
        for (id, x) in &arms {
            let g = x.dot(theta.as_slice())?;
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::invalid(format!(
                    "arm {id} has attractiveness {g}, outside [0, 1]"
                )));
            }
            gammas.push(g);
        }
        let by_gamma_desc = top_k_by_attractiveness(&gammas, gammas.len())?;
        let candidates = CandidateSet::new(arms.clone())?;
        let index_of = arms.iter().enumerate().map(|(i, (a, _))| (*a, i)).collect();
        Ok(Self {
            theta_star: theta,
            arms,
            weights,
            horizon,
            seed,
            gammas,
            by_gamma_desc,
            index_of,
            candidates,
        })
    }

    /// Samples a world: θ\* uniform on the sphere of radius `0.9·sqrt(d)`,
    /// and `m` arm features aimed at attractiveness targets drawn uniformly
    /// from `[0.05, 0.95]` (capped at `‖θ*‖` where the unit ball cannot
    /// reach higher), each with a random component orthogonal to θ\*.
    pub fn generate(
        d: usize,
        m: usize,
        weights: PositionWeights,
        horizon: u64,
        seed: u64,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("the feature dimension must be at least 1"));
        }
        if m == 0 {
            return Err(Error::invalid("the arm pool must not be empty"));
        }
        let mut rng = rng::substream(seed, "world", 0);

        let mut theta = DVector::from_fn(d, |_, _| rng::standard_normal(&mut rng));
        while theta.norm() < 1e-9 {
            theta = DVector::from_fn(d, |_, _| rng::standard_normal(&mut rng));
        }
        let radius = 0.9 * (d as f64).sqrt();
        theta *= radius / theta.norm();
        let unit = &theta / radius;

        let hi = 0.95_f64.min(radius * (1.0 - 1e-9));
        let mut arms = Vec::with_capacity(m);
        for i in 0..m {
            let target = rng.gen_range(0.05..hi);
            // Component along θ* pins the attractiveness; an orthogonal
            // component keeps the pool from collapsing onto one ray.
            let along = target / radius;
            let mut ortho = DVector::from_fn(d, |_, _| rng::standard_normal(&mut rng));
            ortho -= &unit * unit.dot(&ortho);
            let x = if ortho.norm() > 1e-9 {
                let room = (1.0 - along * along).max(0.0).sqrt();
                let scale = rng.gen::<f64>() * room;
                &unit * along + ortho.normalize() * scale
            } else {
                &unit * along
            };
            arms.push((ArmId(i as u64), Context::new(x.as_slice().to_vec())?));
        }
        Self::new(theta.as_slice().to_vec(), arms, weights, horizon, seed)
    }

    pub fn theta_star(&self) -> &[f64] {
        self.theta_star.as_slice()
    }

    /// The arm pool with its feature vectors.
    pub fn arms(&self) -> &[(ArmId, Context)] {
        &self.arms
    }

    /// True attractiveness of each arm, aligned with [`Self::arms`].
    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn weights(&self) -> &PositionWeights {
        &self.weights
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.theta_star.len()
    }

    /// The full pool as a candidate set for policy selection.
    pub fn candidates(&self) -> &CandidateSet {
        &self.candidates
    }

    /// The `k` best arms by true attractiveness, best first.
    pub fn optimal_arms(&self, k: usize) -> Result<Vec<ArmId>> {
        if k > self.arms.len() {
            return Err(Error::invalid(format!(
                "asked for {k} optimal arms from a pool of {}",
                self.arms.len()
            )));
        }
        Ok(self.by_gamma_desc[..k].iter().map(|&i| self.arms[i].0).collect())
    }

    /// The attractiveness gap between the best possible list and `arms`,
    /// position-weighted by the no-prior-click examination probabilities:
    /// `Σ_k w[k][0]·(γ(a*_k) − γ(a_k))`.
    pub fn regret_of(&self, arms: &[ArmId]) -> Result<f64> {
        if arms.is_empty() || arms.len() > self.weights.k() {
            return Err(Error::invalid(format!(
                "list length {} must be between 1 and {}",
                arms.len(),
                self.weights.k()
            )));
        }
        let mut regret = 0.0;
        for (pos, arm) in arms.iter().enumerate() {
            let Some(&idx) = self.index_of.get(arm) else {
                return Err(Error::invalid(format!("arm {arm} is not in the pool")));
            };
            let best = self.gammas[self.by_gamma_desc[pos]];
            regret += self.weights.w(pos + 1, 0)? * (best - self.gammas[idx]);
        }
        Ok(regret)
    }

    /// True attractiveness of one arm.
    pub fn gamma_of(&self, arm: ArmId) -> Result<f64> {
        self.index_of
            .get(&arm)
            .map(|&i| self.gammas[i])
            .ok_or_else(|| Error::invalid(format!("arm {arm} is not in the pool")))
    }

    /// Serializes the world for exact rerun.
    pub fn to_snapshot_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&WorldSnapshot {
            theta_star: self.theta_star.as_slice().to_vec(),
            arms: self.arms.clone(),
            weights: self.weights.clone(),
            horizon: self.horizon,
            seed: self.seed,
        })?)
    }

    /// Restores a world serialized by [`Self::to_snapshot_json`].
    pub fn from_snapshot_json(json: &str) -> Result<Self> {
        let snap: WorldSnapshot = serde_json::from_str(json)?;
        Self::new(snap.theta_star, snap.arms, snap.weights, snap.horizon, snap.seed)
    }
}

/// Everything observed in one played round.
#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub selection: SelectionResult,
    pub clicks: Vec<bool>,
    /// Position-weighted attractiveness gap of the played list.
    pub regret: f64,
}

/// Plays one round: the policy ranks the pool, the browsing-model user
/// clicks, and the sampled clicks are fed straight back into the policy.
pub fn run_round(
    world: &GroundTruthWorld,
    policy: &mut Policy,
    k: usize,
    rng: &mut impl Rng,
) -> Result<RoundOutcome> {
    let selection = policy.select(world.candidates(), k)?;
    let gammas: Vec<f64> = selection
        .arms()
        .iter()
        .map(|&a| world.gamma_of(a))
        .collect::<Result<_>>()?;
    let clicks = simulate_session(&ClickModel::Ubm, &gammas, world.weights(), rng)?;
    let regret = world.regret_of(selection.arms())?;
    policy.feedback(&selection, &clicks)?;
    Ok(RoundOutcome { selection, clicks, regret })
}

/// Generates logged sessions under a uniformly random logging policy: each
/// session shows `k` distinct arms (drawn uniformly, in random order) to
/// one user and records browsing-model clicks against that user's row of
/// `user_gammas`.
///
/// Users are named by their row index. Row `i` must hold one attractiveness
/// value per arm; arm ids are the column indices.
pub fn generate_ubm_sessions(
    user_gammas: &[Vec<f64>],
    weights: &PositionWeights,
    k: usize,
    sessions_per_user: usize,
    seed: u64,
) -> Result<Vec<SessionRecord>> {
    if user_gammas.is_empty() {
        return Err(Error::invalid("need at least one user row"));
    }
    let m = user_gammas[0].len();
    if user_gammas.iter().any(|row| row.len() != m) {
        return Err(Error::invalid("every user row must cover the same arms"));
    }
    if k == 0 || k > m || k > weights.k() {
        return Err(Error::invalid(format!(
            "list length {k} must be between 1 and min(pool {m}, positions {})",
            weights.k()
        )));
    }
    let mut sessions = Vec::with_capacity(user_gammas.len() * sessions_per_user);
    for (user, row) in user_gammas.iter().enumerate() {
        let mut rng = rng::substream(seed, "session-log", user as u64);
        for _ in 0..sessions_per_user {
            let chosen = rand::seq::index::sample(&mut rng, m, k).into_vec();
            let gammas: Vec<f64> = chosen.iter().map(|&j| row[j]).collect();
            let clicks = simulate_session(&ClickModel::Ubm, &gammas, weights, &mut rng)?;
            sessions.push(SessionRecord::new(
                user.to_string(),
                chosen.into_iter().map(|j| ArmId(j as u64)).collect(),
                clicks,
            )?);
        }
    }
    Ok(sessions)
}
