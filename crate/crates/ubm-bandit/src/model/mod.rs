//! Core numeric types shared by every policy and evaluator.
//!
//! The pieces here mirror the learning problem: an arm (item) is a feature
//! [`Context`], user attention is a table of [`PositionWeights`], the learner
//! maintains a weighted ridge regression [`RidgeState`] over click outcomes,
//! exploration width comes from an [`AlphaParams`] schedule, and whole-list
//! outcomes are summarized by the reward helpers.

mod alpha;
mod context;
mod reward;
mod ridge;
mod weights;

pub use alpha::{AlphaParams, RegretBound};
pub use context::{ArmId, Context};
pub use reward::{expected_set_reward, set_reward, top_k_by_attractiveness, SelectionResult};
pub use ridge::{RidgeSample, RidgeState};
pub use weights::PositionWeights;
