//! Ranked-list bandit policies with a uniform select/feedback lifecycle.
//!
//! All policies score every candidate, place the top `K` scores in
//! descending order (the placement that maximizes the expected set reward
//! for monotone examination weights), and learn from per-position clicks.
//! They differ in how a non-click is discounted:
//!
//! - [`Algorithm::UbmLinUcb`] weights each position's sample by the
//!   examination probability `w[k][k']` implied by the realized last click,
//!   so an item the user likely never saw barely moves the estimate.
//! - [`Algorithm::C2Ucb`] counts every displayed position fully (weight 1).
//! - [`Algorithm::CmLinUcb`] keeps positions up to and including the first
//!   click and discards the rest (cascade assumption).
//! - [`Algorithm::DcmLinUcb`] keeps positions up to the last click (all if
//!   none), weighting each by the probability the user kept browsing past
//!   earlier clicked positions given per-position satisfaction rates. The
//!   original description of this baseline is informal; this weighting is an
//!   interpretation, documented as such.
//! - [`Algorithm::PbmUcb`] is non-contextual: per-arm click averages over
//!   position-bias-weighted exposure counts with a UCB bonus.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{
    AlphaParams, ArmId, Context, PositionWeights, RidgeSample, RidgeState, SelectionResult,
};

/// Current version of the JSON policy snapshot format.
pub const SNAPSHOT_VERSION: u32 = 1;

/// Which bandit algorithm a [`Policy`] runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "ubm-linucb")]
    UbmLinUcb,
    #[serde(rename = "c2ucb")]
    C2Ucb,
    #[serde(rename = "cm-linucb")]
    CmLinUcb,
    #[serde(rename = "dcm-linucb")]
    DcmLinUcb,
    #[serde(rename = "pbm-ucb")]
    PbmUcb,
}

impl Algorithm {
    /// All supported algorithms, in canonical reporting order.
    pub fn all() -> [Algorithm; 5] {
        [
            Algorithm::UbmLinUcb,
            Algorithm::C2Ucb,
            Algorithm::CmLinUcb,
            Algorithm::DcmLinUcb,
            Algorithm::PbmUcb,
        ]
    }

    /// Canonical tag used in configs, file names, and reports.
    pub fn tag(&self) -> &'static str {
        match self {
            Algorithm::UbmLinUcb => "ubm-linucb",
            Algorithm::C2Ucb => "c2ucb",
            Algorithm::CmLinUcb => "cm-linucb",
            Algorithm::DcmLinUcb => "dcm-linucb",
            Algorithm::PbmUcb => "pbm-ucb",
        }
    }

    /// Whether the policy learns a linear model over contexts.
    pub fn is_contextual(&self) -> bool {
        !matches!(self, Algorithm::PbmUcb)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::all()
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| {
                let valid: Vec<_> = Algorithm::all().iter().map(|a| a.tag()).collect();
                Error::invalid(format!(
                    "unknown algorithm tag {s:?}; expected one of {}",
                    valid.join(", ")
                ))
            })
    }
}

/// The candidate arms offered in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    arms: Vec<(ArmId, Context)>,
}

impl CandidateSet {
    /// Builds a candidate set of distinct arms with equal-dimension contexts.
    pub fn new(arms: Vec<(ArmId, Context)>) -> Result<Self> {
        if arms.is_empty() {
            return Err(Error::invalid("candidate set must not be empty"));
        }
        let d = arms[0].1.dim();
        let mut seen = std::collections::HashSet::new();
        for (id, ctx) in &arms {
            if !seen.insert(*id) {
                return Err(Error::invalid(format!("duplicate candidate arm {id}")));
            }
            if ctx.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, got: ctx.dim() });
            }
        }
        Ok(CandidateSet { arms })
    }

    /// Number of candidates `m`.
    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    /// Context dimension of every candidate.
    pub fn dim(&self) -> usize {
        self.arms[0].1.dim()
    }

    /// The candidates in their given order.
    pub fn arms(&self) -> &[(ArmId, Context)] {
        &self.arms
    }
}

/// For each position `k` (1-based), the position of the most recent click
/// strictly above it, or 0 if nothing above was clicked. The first position
/// always maps to 0.
pub fn last_click_positions(clicks: &[bool]) -> Vec<usize> {
    let mut out = Vec::with_capacity(clicks.len());
    let mut last = 0usize;
    for (i, &c) in clicks.iter().enumerate() {
        out.push(last);
        if c {
            last = i + 1;
        }
    }
    out
}

/// Per-arm exposure/click tallies for the position-based policy.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct PbmState {
    /// Arm → (position-bias-weighted exposure count, click count).
    arms: BTreeMap<ArmId, (f64, f64)>,
}

/// A ranked-list bandit policy.
///
/// `select` is read-only and deterministic for a given state (score ties are
/// broken by ascending arm id); only `feedback` mutates state, advancing the
/// round counter by exactly 1 per call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    kind: Algorithm,
    weights: PositionWeights,
    alpha: AlphaParams,
    t: u64,
    ridge: Option<RidgeState>,
    pbm: Option<PbmState>,
    /// Per-position satisfaction rates used by the dependent-click policy.
    dcm_satisfaction: Option<Vec<f64>>,
}

impl Policy {
    /// Creates a fresh policy.
    ///
    /// `d` is the context dimension (ignored by the non-contextual
    /// position-based policy), `weights` the examination table shared with
    /// the environment, and `horizon` the planned number of rounds. The
    /// dependent-click policy starts with satisfaction 0.5 at every position;
    /// override it with [`Policy::with_satisfaction`].
    pub fn new(
        kind: Algorithm,
        d: usize,
        weights: PositionWeights,
        horizon: u64,
    ) -> Result<Self> {
        let alpha = match kind {
            Algorithm::UbmLinUcb => AlphaParams::for_weights(d, &weights, horizon)?,
            _ => AlphaParams::for_uniform_exposure(d, weights.k(), horizon)?,
        };
        let ridge = if kind.is_contextual() {
            Some(RidgeState::new(d, alpha.lambda())?)
        } else {
            None
        };
        let pbm = (!kind.is_contextual()).then(PbmState::default);
        let dcm_satisfaction =
            matches!(kind, Algorithm::DcmLinUcb).then(|| vec![0.5; weights.k()]);
        Ok(Policy { kind, weights, alpha, t: 0, ridge, pbm, dcm_satisfaction })
    }

    /// Replaces the dependent-click satisfaction rates (one per position,
    /// each in `[0, 1]`). Only meaningful for [`Algorithm::DcmLinUcb`].
    pub fn with_satisfaction(mut self, satisfaction: Vec<f64>) -> Result<Self> {
        if self.kind != Algorithm::DcmLinUcb {
            return Err(Error::invalid(format!(
                "satisfaction rates only apply to dcm-linucb, not {}",
                self.kind
            )));
        }
        if satisfaction.len() != self.weights.k() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.k(),
                got: satisfaction.len(),
            });
        }
        if satisfaction
            .iter()
            .any(|s| !(0.0..=1.0).contains(s) || !s.is_finite())
        {
            return Err(Error::invalid("satisfaction rates must lie in [0, 1]"));
        }
        self.dcm_satisfaction = Some(satisfaction);
        Ok(self)
    }

    pub fn kind(&self) -> Algorithm {
        self.kind
    }

    /// Rounds of feedback absorbed so far.
    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn weights(&self) -> &PositionWeights {
        &self.weights
    }

    pub fn alpha_params(&self) -> &AlphaParams {
        &self.alpha
    }

    /// The linear estimator, for contextual policies.
    pub fn ridge(&self) -> Option<&RidgeState> {
        self.ridge.as_ref()
    }

    /// Greedily picks the `k` highest-indexed candidates, best first.
    pub fn select(&self, candidates: &CandidateSet, k: usize) -> Result<SelectionResult> {
        if k == 0 {
            return Err(Error::invalid("must select at least one position"));
        }
        if k > self.weights.k() {
            return Err(Error::invalid(format!(
                "cannot fill {k} positions with a {}-position weight table",
                self.weights.k()
            )));
        }
        if candidates.len() < k {
            return Err(Error::invalid(format!(
                "need at least {k} candidates, got {}",
                candidates.len()
            )));
        }
        let round = self.t + 1;
        let mut scored: Vec<(ArmId, f64, &Context)> = Vec::with_capacity(candidates.len());
        match self.kind {
            Algorithm::PbmUcb => {
                let tally = self.pbm.as_ref().expect("pbm state present");
                let log_t = (round as f64).ln();
                for (id, ctx) in candidates.arms() {
                    let score = match tally.arms.get(id) {
                        Some(&(exposure, clicks)) if exposure > 0.0 => {
                            clicks / exposure + (1.5 * log_t / exposure).sqrt()
                        }
                        _ => f64::INFINITY,
                    };
                    scored.push((*id, score, ctx));
                }
            }
            _ => {
                let ridge = self.ridge.as_ref().expect("ridge state present");
                let alpha = self.alpha.alpha(round)?;
                for (id, ctx) in candidates.arms() {
                    scored.push((*id, ridge.ucb_index(ctx, alpha)?, ctx));
                }
            }
        }
        let top = rank_top_k(&mut scored, k);
        SelectionResult::new(
            top.iter().map(|(id, _, _)| *id).collect(),
            top.iter().map(|(_, s, _)| *s).collect(),
            top.iter().map(|(_, _, c)| (*c).clone()).collect(),
        )
    }

    /// Absorbs one round of per-position clicks for the given selection and
    /// advances the round counter.
    pub fn feedback(&mut self, selection: &SelectionResult, clicks: &[bool]) -> Result<()> {
        if clicks.len() != selection.len() {
            return Err(Error::DimensionMismatch {
                expected: selection.len(),
                got: clicks.len(),
            });
        }
        let k_primes = last_click_positions(clicks);
        let contexts = selection.contexts();
        match self.kind {
            Algorithm::UbmLinUcb => {
                let mut samples = Vec::with_capacity(clicks.len());
                for (i, &c) in clicks.iter().enumerate() {
                    samples.push(RidgeSample {
                        weight: self.weights.w(i + 1, k_primes[i])?,
                        x: &contexts[i],
                        reward: f64::from(c),
                    });
                }
                self.ridge.as_mut().expect("ridge state").update(&samples)?;
            }
            Algorithm::C2Ucb => {
                let samples: Vec<_> = clicks
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| RidgeSample {
                        weight: 1.0,
                        x: &contexts[i],
                        reward: f64::from(c),
                    })
                    .collect();
                self.ridge.as_mut().expect("ridge state").update(&samples)?;
            }
            Algorithm::CmLinUcb => {
                // Keep positions up to and including the first click; with no
                // click, the user is assumed to have scanned the whole list.
                let cutoff = clicks
                    .iter()
                    .position(|&c| c)
                    .map_or(clicks.len(), |first| first + 1);
                let samples: Vec<_> = clicks[..cutoff]
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| RidgeSample {
                        weight: 1.0,
                        x: &contexts[i],
                        reward: f64::from(c),
                    })
                    .collect();
                self.ridge.as_mut().expect("ridge state").update(&samples)?;
            }
            Algorithm::DcmLinUcb => {
                // Keep positions up to and including the last click (all with
                // no click). Position k is examined if the user kept browsing
                // past every earlier clicked position, which happens with
                // probability Π (1 − sat_j) over clicked j < k.
                let sat = self.dcm_satisfaction.as_ref().expect("satisfaction present");
                let cutoff = clicks
                    .iter()
                    .rposition(|&c| c)
                    .map_or(clicks.len(), |last| last + 1);
                let mut weight = 1.0;
                let mut samples = Vec::with_capacity(cutoff);
                for (i, &c) in clicks[..cutoff].iter().enumerate() {
                    samples.push(RidgeSample {
                        weight,
                        x: &contexts[i],
                        reward: f64::from(c),
                    });
                    if c {
                        weight *= 1.0 - sat[i];
                    }
                }
                self.ridge.as_mut().expect("ridge state").update(&samples)?;
            }
            Algorithm::PbmUcb => {
                let tally = self.pbm.as_mut().expect("pbm state");
                for (i, (&c, arm)) in clicks.iter().zip(selection.arms()).enumerate() {
                    let entry = tally.arms.entry(*arm).or_insert((0.0, 0.0));
                    entry.0 += self.weights.w(i + 1, 0)?;
                    entry.1 += f64::from(c);
                }
            }
        }
        self.t += 1;
        Ok(())
    }

    /// Serializes the full policy state as a versioned JSON snapshot.
    pub fn to_snapshot_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Snapshot<'a> {
            version: u32,
            policy: &'a Policy,
        }
        Ok(serde_json::to_string(&Snapshot { version: SNAPSHOT_VERSION, policy: self })?)
    }

    /// Restores a policy from a snapshot produced by
    /// [`Policy::to_snapshot_json`].
    pub fn from_snapshot_json(json: &str) -> Result<Policy> {
        #[derive(Deserialize)]
        struct Snapshot {
            version: u32,
            policy: Policy,
        }
        let snap: Snapshot = serde_json::from_str(json)?;
        if snap.version != SNAPSHOT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported snapshot version {} (expected {SNAPSHOT_VERSION})",
                snap.version
            )));
        }
        Ok(snap.policy)
    }
}

/// Sorts scored candidates by descending score, ties by ascending arm id,
/// and returns the best `k`.
fn rank_top_k<'a>(
    scored: &mut [(ArmId, f64, &'a Context)],
    k: usize,
) -> Vec<(ArmId, f64, &'a Context)> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored[..k].to_vec()
}
