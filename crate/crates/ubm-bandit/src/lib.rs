//! Contextual combinatorial bandits for ranked recommendation under a
//! user browsing click model.
//!
//! A learner repeatedly picks an ordered list of `K` items out of `m`
//! candidates, each described by a feature vector, and observes per-position
//! clicks. Users scan the list from top to bottom with attention that decays
//! with position and with the distance from their previous click, so a skipped
//! item may simply never have been examined. The policies in this crate fold
//! that examination structure into a weighted linear UCB update instead of
//! treating every non-click as a full negative.
//!
//! The crate is organized around six areas:
//!
//! - [`model`]: core numeric types — feature contexts, position/click-gap
//!   examination weights, the weighted online ridge estimator, the
//!   exploration schedule, and list-level reward helpers.
//! - [`click`]: session records and TSV log I/O, click simulators for four
//!   browsing models, and EM fitting of examination weights and item
//!   attractiveness from logs.
//! - [`policy`]: ranked-list bandit policies behind one interface — the
//!   browsing-model-aware policy plus cascade, dependent-click, position-based,
//!   and unweighted baselines — with JSON snapshot/restore.
//! - [`replay`]: offline policy evaluation over grouped logs with
//!   propensity-corrected item rewards and trace output.
//! - [`env`]: synthetic ground-truth worlds, a click-log generator, the
//!   user–item attractiveness matrix, and randomized truncated SVD features.
//! - [`harness`]: experiment configuration, multi-seed orchestration, CSV
//!   emission, and lift tables.

pub mod click;
pub mod env;
pub mod error;
pub mod harness;
pub mod model;
pub mod policy;
pub mod replay;
pub mod rng;

pub use error::{Error, Result};
