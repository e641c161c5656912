//! EM estimation of examination weights and item attractiveness from logs.
//!
//! Each displayed position is a Bernoulli observation `click = E·A` with two
//! latent causes: the user examined the slot (`E`, probability `w[k][k']`
//! where `k'` comes from the logged clicks above) and found the item
//! attractive (`A`, probability `γ_a`). A click pins both latents to 1; for
//! a non-click the E-step takes posteriors
//!
//! ```text
//! P(E=1 | no click) = w(1−γ)/(1−wγ)     P(A=1 | no click) = γ(1−w)/(1−wγ)
//! ```
//!
//! and the M-step re-estimates each parameter as its expected-count ratio.
//! The parameters are identifiable only up to the data's constraint
//! structure (scaling `w` up and `γ` down can preserve the products the log
//! can see), so comparisons across fits should use weight ratios.
//!
//! Initialization is `w = γ = 0.5` everywhere. The likelihood surface can
//! hold multiple EM fixed points, so other initializations may converge
//! elsewhere; with list-length-scale data per slot this flat start recovers
//! generator ratios well (see the recovery tests).

use std::collections::{BTreeMap, HashMap};

use crate::click::session::{AttractivenessTable, SessionRecord};
use crate::error::{Error, Result};
use crate::model::{ArmId, PositionWeights};
use crate::policy::last_click_positions;

/// Parameters are clamped into `[CLAMP, 1 − CLAMP]` after every M-step.
const CLAMP: f64 = 1e-6;
/// Fitting stops once the log-likelihood improves by less than this.
const LL_TOLERANCE: f64 = 1e-6;
/// Hard cap on M-step updates.
const MAX_ITERATIONS: usize = 200;

/// Result of [`em_fit_ubm`].
#[derive(Debug, Clone)]
pub struct UbmFit {
    /// Fitted examination weights (reported as estimated, never projected
    /// onto the monotone cone).
    pub weights: PositionWeights,
    /// Fitted per-arm attractiveness, covering every arm that was displayed.
    pub attractiveness: AttractivenessTable,
    /// Log-likelihood of the returned parameters.
    pub log_likelihood: f64,
    /// Number of M-step updates performed.
    pub iterations: usize,
    /// Log-likelihood before each update plus the final value; never
    /// decreasing (up to floating-point noise).
    pub ll_trace: Vec<f64>,
    /// Shape violations of the fitted weight table, surfaced as warnings.
    pub monotonicity_warnings: Vec<String>,
}

/// One aggregated observation group: a `(slot, arm, clicked)` combination
/// and how often it occurs. E-step posteriors depend only on these three
/// coordinates, so iterating groups is exact and far cheaper than iterating
/// impressions.
struct Combo {
    slot: usize,
    arm: usize,
    clicked: bool,
    count: f64,
}

struct EStep {
    ll: f64,
    examined: Vec<f64>,
    attracted: Vec<f64>,
}

/// Fits examination weights and attractiveness to sessions of length ≤ `k`.
pub fn em_fit_ubm(sessions: &[SessionRecord], k: usize) -> Result<UbmFit> {
    if sessions.is_empty() {
        return Err(Error::invalid("cannot fit on an empty session log"));
    }
    if k == 0 {
        return Err(Error::invalid("list length must be at least 1"));
    }
    let template = PositionWeights::uniform(k, 0.5)?;
    let n_slots = template.n_slots();

    // Index arms deterministically and aggregate impressions into combos.
    let mut arm_ids: BTreeMap<ArmId, usize> = BTreeMap::new();
    for s in sessions {
        if s.len() > k {
            return Err(Error::invalid(format!(
                "session of length {} exceeds list length {k}",
                s.len()
            )));
        }
        for &a in s.displayed() {
            let next = arm_ids.len();
            arm_ids.entry(a).or_insert(next);
        }
    }
    let mut counts: HashMap<(usize, usize, bool), f64> = HashMap::new();
    for s in sessions {
        let kps = last_click_positions(s.clicks());
        for (i, (&arm, &clicked)) in s.displayed().iter().zip(s.clicks()).enumerate() {
            let slot = template.slot_index(i + 1, kps[i])?;
            *counts.entry((slot, arm_ids[&arm], clicked)).or_insert(0.0) += 1.0;
        }
    }
    let mut combos: Vec<Combo> = counts
        .into_iter()
        .map(|((slot, arm, clicked), count)| Combo { slot, arm, clicked, count })
        .collect();
    combos.sort_by_key(|c| (c.slot, c.arm, c.clicked));

    let mut slot_totals = vec![0.0; n_slots];
    let mut arm_totals = vec![0.0; arm_ids.len()];
    for c in &combos {
        slot_totals[c.slot] += c.count;
        arm_totals[c.arm] += c.count;
    }

    let mut w = vec![0.5; n_slots];
    let mut g = vec![0.5; arm_ids.len()];
    let mut trace: Vec<f64> = Vec::new();
    let mut iterations = 0usize;

    loop {
        let stats = e_step(&combos, &w, &g, n_slots);
        if let Some(&prev) = trace.last() {
            debug_assert!(
                stats.ll >= prev - 1e-9 * prev.abs().max(1.0),
                "log-likelihood decreased: {prev} -> {}",
                stats.ll
            );
            trace.push(stats.ll);
            if stats.ll - prev < LL_TOLERANCE {
                break;
            }
        } else {
            trace.push(stats.ll);
        }
        if iterations == MAX_ITERATIONS {
            break;
        }
        for slot in 0..n_slots {
            if slot_totals[slot] > 0.0 {
                w[slot] = (stats.examined[slot] / slot_totals[slot])
                    .clamp(CLAMP, 1.0 - CLAMP);
            }
        }
        for arm in 0..g.len() {
            if arm_totals[arm] > 0.0 {
                g[arm] =
                    (stats.attracted[arm] / arm_totals[arm]).clamp(CLAMP, 1.0 - CLAMP);
            }
        }
        iterations += 1;
    }

    // Reassemble the flat slot vector into rows w[k][0..k].
    let mut rows = Vec::with_capacity(k);
    let mut cursor = 0usize;
    for pos in 1..=k {
        rows.push(w[cursor..cursor + pos].to_vec());
        cursor += pos;
    }
    let weights = PositionWeights::from_rows(rows)?;
    let monotonicity_warnings = weights.monotonicity_violations();

    let table: BTreeMap<ArmId, f64> = arm_ids.iter().map(|(&a, &i)| (a, g[i])).collect();
    let attractiveness = AttractivenessTable::new(table)?;

    Ok(UbmFit {
        weights,
        attractiveness,
        log_likelihood: *trace.last().expect("at least one evaluation"),
        iterations,
        ll_trace: trace,
        monotonicity_warnings,
    })
}

fn e_step(combos: &[Combo], w: &[f64], g: &[f64], n_slots: usize) -> EStep {
    let mut ll = 0.0;
    let mut examined = vec![0.0; n_slots];
    let mut attracted = vec![0.0; g.len()];
    for c in combos {
        let wv = w[c.slot];
        let gv = g[c.arm];
        let p = wv * gv;
        if c.clicked {
            examined[c.slot] += c.count;
            attracted[c.arm] += c.count;
            ll += c.count * p.ln();
        } else {
            let miss = 1.0 - p;
            examined[c.slot] += c.count * wv * (1.0 - gv) / miss;
            attracted[c.arm] += c.count * gv * (1.0 - wv) / miss;
            ll += c.count * miss.ln();
        }
    }
    EStep { ll, examined, attracted }
}

/// Estimates per-position satisfaction rates for the dependent-click model:
/// the fraction of clicks at each position that were the session's last
/// click. Positions never clicked in the log default to 0.5.
pub fn fit_dcm_satisfaction(sessions: &[SessionRecord], k: usize) -> Result<Vec<f64>> {
    if sessions.is_empty() {
        return Err(Error::invalid("cannot fit on an empty session log"));
    }
    if k == 0 {
        return Err(Error::invalid("list length must be at least 1"));
    }
    let mut clicked = vec![0.0f64; k];
    let mut terminal = vec![0.0f64; k];
    for s in sessions {
        if s.len() > k {
            return Err(Error::invalid(format!(
                "session of length {} exceeds list length {k}",
                s.len()
            )));
        }
        let last = s.clicks().iter().rposition(|&c| c);
        for (i, &c) in s.clicks().iter().enumerate() {
            if c {
                clicked[i] += 1.0;
                if last == Some(i) {
                    terminal[i] += 1.0;
                }
            }
        }
    }
    Ok((0..k)
        .map(|i| if clicked[i] > 0.0 { terminal[i] / clicked[i] } else { 0.5 })
        .collect())
}
