//! Weighted online ridge regression with rank-1 inverse maintenance.
//!
//! Each observed position contributes a sample `(w, x, r)` where `w` is the
//! examination weight of the slot the item occupied, `x` its context, and `r`
//! the click outcome. The estimator accumulates
//!
//! ```text
//! A ← A + w²·x·xᵀ        b ← b + w·r·x        θ = A⁻¹·b
//! ```
//!
//! so a barely-examined position moves the estimate proportionally less. The
//! inverse is maintained incrementally by the Sherman–Morrison identity and
//! re-factorized from scratch (Cholesky) every [`REFRESH_INTERVAL`] rank-1
//! updates to stop round-off drift from compounding over long horizons.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Context;

/// Rank-1 updates between full Cholesky re-factorizations of the inverse.
pub const REFRESH_INTERVAL: u64 = 1000;

/// One weighted observation: examination weight, item context, click reward.
#[derive(Debug, Clone, Copy)]
pub struct RidgeSample<'a> {
    /// Examination weight of the slot, in `[0, 1]`.
    pub weight: f64,
    /// Context of the displayed item.
    pub x: &'a Context,
    /// Click outcome, 0 or 1.
    pub reward: f64,
}

/// State of the weighted ridge estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeState {
    d: usize,
    lambda: f64,
    a: DMatrix<f64>,
    a_inv: DMatrix<f64>,
    b: DVector<f64>,
    theta: DVector<f64>,
    update_count: u64,
}

impl RidgeState {
    /// Fresh estimator of dimension `d ≥ 1` with ridge term `lambda > 0`:
    /// `A = λI`, `b = 0`, `θ = 0`.
    pub fn new(d: usize, lambda: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("ridge dimension must be at least 1"));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::invalid(format!(
                "ridge lambda must be positive and finite, got {lambda}"
            )));
        }
        Ok(RidgeState {
            d,
            lambda,
            a: DMatrix::identity(d, d) * lambda,
            a_inv: DMatrix::identity(d, d) / lambda,
            b: DVector::zeros(d),
            theta: DVector::zeros(d),
            update_count: 0,
        })
    }

    /// Rebuilds an estimator from an explicit normal-equation pair. `a` must
    /// be symmetric positive definite; the inverse and `θ` are re-derived by
    /// Cholesky factorization.
    pub fn from_parts(lambda: f64, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(Error::invalid("normal matrix must be square and non-empty"));
        }
        if b.len() != a.nrows() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                got: b.len(),
            });
        }
        let chol = Cholesky::new(a.clone())
            .ok_or_else(|| Error::invalid("normal matrix must be positive definite"))?;
        let a_inv = chol.inverse();
        let theta = &a_inv * &b;
        Ok(RidgeState {
            d: a.nrows(),
            lambda,
            a,
            a_inv,
            b,
            theta,
            update_count: 0,
        })
    }

    /// Feature dimension.
    pub fn dim(&self) -> usize {
        self.d
    }

    /// Ridge regularization strength.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Number of rank-1 updates absorbed so far.
    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    /// Current coefficient estimate `θ = A⁻¹·b`.
    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    /// Accumulated normal matrix `A`.
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Maintained inverse of `A`.
    pub fn a_inv(&self) -> &DMatrix<f64> {
        &self.a_inv
    }

    /// Accumulated response vector `b`.
    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// Absorbs a batch of weighted observations and refreshes `θ`.
    ///
    /// Weights must lie in `[0, 1]` and rewards in `[0, 1]`; contexts must
    /// match the estimator dimension. A zero-weight sample leaves the state
    /// unchanged apart from the update counter.
    pub fn update(&mut self, samples: &[RidgeSample<'_>]) -> Result<()> {
        for s in samples {
            if !(0.0..=1.0).contains(&s.weight) || !s.weight.is_finite() {
                return Err(Error::invalid(format!(
                    "sample weight {} is outside [0, 1]",
                    s.weight
                )));
            }
            if !(0.0..=1.0).contains(&s.reward) || !s.reward.is_finite() {
                return Err(Error::invalid(format!(
                    "sample reward {} is outside [0, 1]",
                    s.reward
                )));
            }
            if s.x.dim() != self.d {
                return Err(Error::DimensionMismatch {
                    expected: self.d,
                    got: s.x.dim(),
                });
            }
        }
        for s in samples {
            self.update_one(s);
        }
        self.theta = &self.a_inv * &self.b;
        Ok(())
    }

    fn update_one(&mut self, s: &RidgeSample<'_>) {
        let x = s.x.as_slice();
        // u = w·x; A += u·uᵀ; Sherman–Morrison on the inverse:
        // A⁻¹ ← A⁻¹ − (A⁻¹u)(A⁻¹u)ᵀ / (1 + uᵀA⁻¹u).
        let u = DVector::from_iterator(self.d, x.iter().map(|v| v * s.weight));
        self.a.ger(1.0, &u, &u, 1.0);
        let ainv_u = &self.a_inv * &u;
        let denom = 1.0 + u.dot(&ainv_u);
        self.a_inv.ger(-1.0 / denom, &ainv_u, &ainv_u, 1.0);
        // b += w·r·x, and u = w·x already holds the weighted context.
        self.b.axpy(s.reward, &u, 1.0);
        self.update_count += 1;
        if self.update_count.is_multiple_of(REFRESH_INTERVAL) {
            self.refresh_inverse();
        }
    }

    /// Re-derives the inverse from `A` by Cholesky factorization.
    fn refresh_inverse(&mut self) {
        if let Some(chol) = Cholesky::new(self.a.clone()) {
            self.a_inv = chol.inverse();
        }
    }

    /// Upper-confidence index `θᵀx + α·sqrt(xᵀA⁻¹x)` for a candidate context.
    pub fn ucb_index(&self, x: &Context, alpha: f64) -> Result<f64> {
        if x.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.dim(),
            });
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::invalid(format!(
                "exploration width must be non-negative and finite, got {alpha}"
            )));
        }
        let xs = x.as_slice();
        let mean: f64 = xs.iter().zip(self.theta.iter()).map(|(a, b)| a * b).sum();
        // Round-off in the maintained inverse can push a tiny quadratic form
        // below zero; clamp before the square root.
        let var = quad_form(&self.a_inv, xs).max(0.0);
        Ok(mean + alpha * var.sqrt())
    }
}

/// `xᵀ·M·x` without allocating.
fn quad_form(m: &DMatrix<f64>, x: &[f64]) -> f64 {
    let mut total = 0.0;
    for (j, &xj) in x.iter().enumerate() {
        let mut col = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            col += xi * m[(i, j)];
        }
        total += col * xj;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    /// Independent closed-form oracle: accumulate the normal equations in one
    /// shot and solve by Cholesky, bypassing the incremental inverse.
    fn dense_theta(d: usize, lambda: f64, samples: &[(f64, Vec<f64>, f64)]) -> DVector<f64> {
        let mut a = DMatrix::identity(d, d) * lambda;
        let mut b = DVector::zeros(d);
        for (w, x, r) in samples {
            let xv = DVector::from_column_slice(x);
            a += &xv * xv.transpose() * (w * w);
            b += xv * (w * r);
        }
        Cholesky::new(a).expect("oracle matrix is SPD").solve(&b)
    }

    #[test]
    fn fresh_state_is_scaled_identity() {
        let s = RidgeState::new(3, 1.06).unwrap();
        assert_eq!(s.dim(), 3);
        assert_relative_eq!(s.a()[(0, 0)], 1.06);
        assert_relative_eq!(s.a()[(1, 2)], 0.0);
        assert_relative_eq!(s.a_inv()[(2, 2)], 1.0 / 1.06, epsilon = 1e-15);
        assert_eq!(s.b().as_slice(), &[0.0; 3]);
        assert_eq!(s.theta().as_slice(), &[0.0; 3]);
    }

    #[test]
    fn two_sample_update_matches_hand_arithmetic() {
        // d = 2, λ = 1, samples (w=0.5, x=e₁, r=1) and (w=1, x=e₂, r=0):
        // A = diag(1 + 0.25, 1 + 1), b = (0.5, 0), θ = (0.5/1.25, 0) = (0.4, 0).
        let mut s = RidgeState::new(2, 1.0).unwrap();
        let e1 = Context::new(vec![1.0, 0.0]).unwrap();
        let e2 = Context::new(vec![0.0, 1.0]).unwrap();
        s.update(&[
            RidgeSample { weight: 0.5, x: &e1, reward: 1.0 },
            RidgeSample { weight: 1.0, x: &e2, reward: 0.0 },
        ])
        .unwrap();
        assert_relative_eq!(s.a()[(0, 0)], 1.25, epsilon = 1e-12);
        assert_relative_eq!(s.a()[(1, 1)], 2.0, epsilon = 1e-12);
        assert_relative_eq!(s.a()[(0, 1)], 0.0, epsilon = 1e-12);
        assert_relative_eq!(s.b()[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(s.b()[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(s.theta()[0], 0.4, epsilon = 1e-12);
        assert_relative_eq!(s.theta()[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn ucb_index_matches_arithmetic_oracle() {
        // θ = (1, 2), A = diag(4, 1), x = (1, 1)/√2, α = 2.
        // Oracle: θᵀx = 3/√2; xᵀA⁻¹x = (1/4 + 1)/2 = 0.625;
        // index = 3/√2 + 2·√0.625 = 3.7024591736438…
        let a = DMatrix::from_diagonal(&DVector::from_column_slice(&[4.0, 1.0]));
        let b = DVector::from_column_slice(&[4.0, 2.0]); // A·θ with θ = (1, 2)
        let s = RidgeState::from_parts(1.0, a, b).unwrap();
        assert_relative_eq!(s.theta()[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(s.theta()[1], 2.0, epsilon = 1e-12);

        let inv_sqrt2 = 1.0 / 2.0_f64.sqrt();
        let x = Context::new(vec![inv_sqrt2, inv_sqrt2]).unwrap();
        let oracle = 3.0 * inv_sqrt2 + 2.0 * 0.625_f64.sqrt();
        let idx = s.ucb_index(&x, 2.0).unwrap();
        assert_relative_eq!(idx, oracle, epsilon = 1e-12);
        assert_relative_eq!(idx, 3.702_459_173_643_833, epsilon = 1e-9);
    }

    #[test]
    fn zero_alpha_reduces_to_point_estimate() {
        let a = DMatrix::from_diagonal(&DVector::from_column_slice(&[2.0, 3.0]));
        let b = DVector::from_column_slice(&[2.0, 0.0]);
        let s = RidgeState::from_parts(1.0, a, b).unwrap();
        let x = Context::new(vec![0.5, 0.5]).unwrap();
        let idx = s.ucb_index(&x, 0.0).unwrap();
        assert_relative_eq!(idx, s.theta()[0] * 0.5 + s.theta()[1] * 0.5, epsilon = 1e-15);
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        assert!(RidgeState::new(0, 1.0).is_err());
        assert!(RidgeState::new(2, 0.0).is_err());
        assert!(RidgeState::new(2, -1.0).is_err());

        let mut s = RidgeState::new(2, 1.0).unwrap();
        let x = Context::new(vec![1.0, 0.0]).unwrap();
        let x3 = Context::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(s
            .update(&[RidgeSample { weight: -0.1, x: &x, reward: 1.0 }])
            .is_err());
        assert!(s
            .update(&[RidgeSample { weight: 1.1, x: &x, reward: 1.0 }])
            .is_err());
        assert!(s
            .update(&[RidgeSample { weight: 0.5, x: &x3, reward: 1.0 }])
            .is_err());
        assert!(s.ucb_index(&x3, 1.0).is_err());
        assert!(s.ucb_index(&x, f64::NAN).is_err());
        // A rejected batch must leave the state untouched.
        assert_eq!(s.update_count(), 0);
        assert_eq!(s.b().as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn zero_weight_samples_are_inert() {
        let mut s = RidgeState::new(2, 1.0).unwrap();
        let x = Context::new(vec![0.8, 0.1]).unwrap();
        s.update(&[RidgeSample { weight: 0.0, x: &x, reward: 1.0 }]).unwrap();
        assert_relative_eq!(s.a()[(0, 0)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(s.b()[0], 0.0, epsilon = 1e-15);
        assert_eq!(s.update_count(), 1);
    }

    #[test]
    fn long_stream_with_refresh_tracks_dense_oracle() {
        let mut rng = crate::rng::from_seed(42);
        let d = 4;
        let mut s = RidgeState::new(d, 1.5).unwrap();
        let mut samples = Vec::new();
        for _ in 0..2500 {
            let raw: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = Context::new(raw).unwrap();
            let w: f64 = rng.gen_range(0.0..1.0);
            let r = f64::from(rng.gen_bool(0.4));
            s.update(&[RidgeSample { weight: w, x: &x, reward: r }]).unwrap();
            samples.push((w, x.as_slice().to_vec(), r));
        }
        assert!(s.update_count() > 2 * REFRESH_INTERVAL);
        let oracle = dense_theta(d, 1.5, &samples);
        for i in 0..d {
            assert_relative_eq!(s.theta()[i], oracle[i], epsilon = 1e-9, max_relative = 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        /// Incremental updates must agree with the one-shot dense solve, and
        /// the maintained inverse must stay a true inverse of `A`.
        #[test]
        fn online_matches_batch_solve(
            seed in 0u64..1000,
            d in 1usize..8,
            n in 1usize..120,
            lambda in 0.5f64..4.0,
        ) {
            let mut rng = crate::rng::from_seed(seed);
            let mut s = RidgeState::new(d, lambda).unwrap();
            let mut samples = Vec::new();
            for _ in 0..n {
                let raw: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let x = Context::new(raw).unwrap();
                let w: f64 = rng.gen_range(0.0..1.0);
                let r = f64::from(rng.gen_bool(0.5));
                s.update(&[RidgeSample { weight: w, x: &x, reward: r }]).unwrap();
                samples.push((w, x.as_slice().to_vec(), r));
            }
            let oracle = dense_theta(d, lambda, &samples);
            for i in 0..d {
                prop_assert!((s.theta()[i] - oracle[i]).abs() <= 1e-9 * oracle[i].abs().max(1.0));
            }
            // θ = A⁻¹·b within 1e−10.
            let recomputed = s.a_inv() * s.b();
            for i in 0..d {
                prop_assert!((s.theta()[i] - recomputed[i]).abs() <= 1e-10);
            }
            // A·A⁻¹ ≈ I.
            let prod = s.a() * s.a_inv();
            for i in 0..d {
                for j in 0..d {
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((prod[(i, j)] - want).abs() < 1e-8);
                }
            }
        }

        /// The confidence width is a PSD quadratic form: non-negative for
        /// every probe vector, and zero only for the zero vector.
        #[test]
        fn inverse_stays_positive_definite(
            seed in 0u64..1000,
            d in 1usize..6,
            n in 0usize..80,
        ) {
            let mut rng = crate::rng::from_seed(seed ^ 0xabcd);
            let mut s = RidgeState::new(d, 1.0).unwrap();
            for _ in 0..n {
                let raw: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let x = Context::new(raw).unwrap();
                let w: f64 = rng.gen_range(0.0..1.0);
                s.update(&[RidgeSample { weight: w, x: &x, reward: 0.0 }]).unwrap();
            }
            for _ in 0..16 {
                let probe: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let q = quad_form(s.a_inv(), &probe);
                let norm2: f64 = probe.iter().map(|v| v * v).sum();
                prop_assert!(q >= -1e-12);
                // λ ≥ 1 and per-sample growth ≤ 1 bound the spectrum away
                // from zero: xᵀA⁻¹x ≥ ‖x‖²/(λ + n).
                prop_assert!(q >= norm2 / (1.0 + n as f64) - 1e-9);
            }
        }
    }
}
