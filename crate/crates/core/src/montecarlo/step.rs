//! One-quarter transitions of the state.
//!
//! All three schemes use the floored square root `√(V ∨ 0)` for the noise.
//! They differ in the drift: the risk-neutral cut-off scheme subtracts
//! `Σ(V ∨ 0)λ` from the physical drift, the raw scheme uses the affine
//! risk-neutral drift `(I + a)x + b` directly.

use crate::linalg::{Mat2, Vec2};
use crate::model::{vol_floor, PhysicalParams, RiskNeutralParams, StateVec};
use crate::scalar::Real;

#[inline]
fn diffusion<T: Real>(sigma: &Mat2<T>, floored: Vec2<T>, eps: Vec2<T>) -> Vec2<T> {
    sigma.mul_vec(floored.map(T::sqrt).hadamard(eps))
}

/// Risk-neutral step with the volatility cut-off applied to the
/// market-price-of-risk correction.
pub fn step_q_cutoff<T: Real>(p: &PhysicalParams<T>, x: StateVec<T>, eps: Vec2<T>) -> StateVec<T> {
    let v = vol_floor(p.volatility(x));
    p.persistence().mul_vec(x) + p.b_hat - p.sigma.mul_vec(v.hadamard(p.lambda))
        + diffusion(&p.sigma, v, eps)
}

/// Risk-neutral step with the affine drift.
pub fn step_q_raw<T: Real>(rn: &RiskNeutralParams<T>, x: StateVec<T>, eps: Vec2<T>) -> StateVec<T> {
    let v = vol_floor(rn.alpha + rn.beta.mul_vec(x));
    (Mat2::identity() + rn.a).mul_vec(x) + rn.b + diffusion(&rn.sigma, v, eps)
}

/// Physical-measure step.
pub fn step_p<T: Real>(p: &PhysicalParams<T>, x: StateVec<T>, eps: Vec2<T>) -> StateVec<T> {
    let v = vol_floor(p.volatility(x));
    p.persistence().mul_vec(x) + p.b_hat + diffusion(&p.sigma, v, eps)
}
