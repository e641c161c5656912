//! Examination weights indexed by position and last-click gap.
//!
//! `w[k][k']` is the probability that a user examines position `k` given that
//! their most recent click in the same list was at position `k'` (`k' = 0`
//! meaning no click yet). Attention fades down the list and recovers after a
//! click, so a plausible table is non-increasing in `k` at fixed `k'` and
//! non-decreasing in `k'` at fixed `k`; fitted tables are reported as-is and
//! violations of that shape are surfaced as warnings, never corrected.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower-triangular table of examination probabilities.
///
/// Serialized as `{"k": K, "w": [[w_1,0], [w_2,0, w_2,1], …]}` — row `k`
/// (1-based position) holds `w[k][0], …, w[k][k−1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositionWeights {
    k: usize,
    w: Vec<Vec<f64>>,
}

impl PositionWeights {
    /// Builds a table from rows `w[k][0..k]` for positions `k = 1..=K`.
    ///
    /// Row `k` (0-indexed `k−1`) must have exactly `k` entries, every entry a
    /// probability in `[0, 1]`. Shape monotonicity is deliberately not
    /// enforced here; see [`PositionWeights::monotonicity_violations`].
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if k == 0 {
            return Err(Error::invalid("weight table must have at least one row"));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != i + 1 {
                return Err(Error::invalid(format!(
                    "weight row for position {} must have {} entries, got {}",
                    i + 1,
                    i + 1,
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                    return Err(Error::invalid(format!(
                        "weight w[{}][{}] = {v} is outside [0, 1]",
                        i + 1,
                        j
                    )));
                }
            }
        }
        Ok(PositionWeights { k, w: rows })
    }

    /// Geometric family `w[k][k'] = decay^(k − k')`, with `k' = 0` treated as
    /// distance `k`. Requires `decay ∈ (0, 1]`.
    pub fn geometric(k: usize, decay: f64) -> Result<Self> {
        if !(decay > 0.0 && decay <= 1.0) {
            return Err(Error::invalid(format!(
                "geometric decay must lie in (0, 1], got {decay}"
            )));
        }
        let rows = (1..=k)
            .map(|pos| {
                (0..pos)
                    .map(|kp| decay.powi((pos - kp) as i32))
                    .collect::<Vec<_>>()
            })
            .collect();
        PositionWeights::from_rows(rows)
    }

    /// Constant table `w[k][k'] = value` for every slot.
    pub fn uniform(k: usize, value: f64) -> Result<Self> {
        let rows = (1..=k).map(|pos| vec![value; pos]).collect();
        PositionWeights::from_rows(rows)
    }

    /// List length `K`.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Examination probability for position `k` (1-based) with last click at
    /// `k'` (0 for none; must satisfy `k' < k`).
    pub fn w(&self, k: usize, k_prime: usize) -> Result<f64> {
        self.check_slot(k, k_prime)?;
        Ok(self.w[k - 1][k_prime])
    }

    /// Row for position `k`: `[w[k][0], …, w[k][k−1]]`.
    pub fn row(&self, k: usize) -> Result<&[f64]> {
        if k == 0 || k > self.k {
            return Err(Error::invalid(format!(
                "position {k} outside 1..={}",
                self.k
            )));
        }
        Ok(&self.w[k - 1])
    }

    /// Number of `(k, k')` slots, `K(K+1)/2`.
    pub fn n_slots(&self) -> usize {
        self.k * (self.k + 1) / 2
    }

    /// Index of slot `(k, k')` in the flattened vector: rows concatenated in
    /// increasing `k`, each row in increasing `k'`, so
    /// `slot_index(k, k') = k(k−1)/2 + k'`.
    pub fn slot_index(&self, k: usize, k_prime: usize) -> Result<usize> {
        self.check_slot(k, k_prime)?;
        Ok(k * (k - 1) / 2 + k_prime)
    }

    /// The flattened weight vector `[w[1][0], w[2][0], w[2][1], …, w[K][K−1]]`
    /// in [`PositionWeights::slot_index`] order.
    pub fn tilde(&self) -> Vec<f64> {
        self.w.iter().flatten().copied().collect()
    }

    /// Sum of squared adjacent-click weights `Σ_{k=1..K} w[k][k−1]²`, the
    /// effective per-round exposure mass that drives both the ridge
    /// regularizer floor and the exploration schedule.
    pub fn phi_prime(&self) -> f64 {
        (1..=self.k).map(|k| self.w[k - 1][k - 1].powi(2)).sum()
    }

    /// Lists violations of the expected table shape: examination should not
    /// increase with depth `k` at a fixed last click, and should not decrease
    /// as the last click `k'` moves closer to `k`. Returns one message per
    /// violated adjacent pair; empty means the table is monotone.
    pub fn monotonicity_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for kp in 0..self.k {
            for k in (kp + 1)..self.k {
                let upper = self.w[k - 1][kp];
                let lower = self.w[k][kp];
                if lower > upper {
                    out.push(format!(
                        "w[{}][{kp}] = {lower} exceeds w[{k}][{kp}] = {upper}",
                        k + 1
                    ));
                }
            }
        }
        for k in 1..=self.k {
            for kp in 1..k {
                let near = self.w[k - 1][kp];
                let far = self.w[k - 1][kp - 1];
                if far > near {
                    out.push(format!(
                        "w[{k}][{}] = {far} exceeds w[{k}][{kp}] = {near}",
                        kp - 1
                    ));
                }
            }
        }
        out
    }

    fn check_slot(&self, k: usize, k_prime: usize) -> Result<()> {
        if k == 0 || k > self.k {
            return Err(Error::invalid(format!(
                "position {k} outside 1..={}",
                self.k
            )));
        }
        if k_prime >= k {
            return Err(Error::invalid(format!(
                "last click {k_prime} must be below position {k}"
            )));
        }
        Ok(())
    }
}

impl<'de> Deserialize<'de> for PositionWeights {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        #[derive(Deserialize)]
        struct Raw {
            #[allow(dead_code)]
            k: usize,
            w: Vec<Vec<f64>>,
        }
        let raw = Raw::deserialize(deserializer)?;
        let table = PositionWeights::from_rows(raw.w).map_err(serde::de::Error::custom)?;
        if table.k != raw.k {
            return Err(serde::de::Error::custom(format!(
                "declared k = {} does not match {} weight rows",
                raw.k, table.k
            )));
        }
        Ok(table)
    }
}
