//! Model parameterization, volatility factors and the physical ↔ risk-neutral
//! parameter maps.
//!
//! Parameters are stored under the physical measure. The risk-neutral drift is
//! always derived from them and never stored independently.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{Mat2, Vec2};
use crate::scalar::Scalar;
use crate::units;

/// State vector: ex-ante real short rate and expected inflation, both in
/// annualized percent. No sign restriction.
pub type StateVec<T> = Vec2<T>;

/// Volatility factors `α + βx`, possibly negative before flooring.
pub type VolatilityVec<T> = Vec2<T>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// `v2 = v1`: equal β rows and equal α entries.
    Proportional,
    /// `v2 = v1 + c` with `c > 0`: equal β rows.
    #[serde(rename = "dependent")]
    DependentNonProportional,
    /// `det β ≠ 0`.
    Independent,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Proportional => "proportional",
            ModelKind::DependentNonProportional => "dependent",
            ModelKind::Independent => "independent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{field}: {message}")]
    Constraint { field: String, message: String },
    #[error("drift matrix â is singular; the equilibrium state is undefined")]
    SingularDrift,
    #[error("I + â is not stable (an eigenvalue lies on or outside the unit circle)")]
    NonStationary,
}

impl ModelError {
    pub(crate) fn constraint(field: impl Into<String>, message: impl Into<String>) -> Self {
        ModelError::Constraint {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Prefixes the field path of a constraint violation.
    pub fn within(self, prefix: &str) -> Self {
        match self {
            ModelError::Constraint { field, message } => ModelError::Constraint {
                field: format!("{prefix}.{field}"),
                message,
            },
            other => other,
        }
    }
}

/// Full model parameterization under the physical measure.
///
/// `a_hat` and `b_hat` are per-quarter drift terms of the state in annualized
/// percent; the noise loadings `nu*` are in per-quarter yield fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams<T> {
    pub a_hat: Mat2<T>,
    pub b_hat: Vec2<T>,
    pub alpha: Vec2<T>,
    pub beta: Mat2<T>,
    pub sigma: Mat2<T>,
    pub lambda: Vec2<T>,
    pub omega_pi: T,
    pub omega_s: T,
    pub nu0: T,
    pub nu1: T,
    pub nu2: T,
    pub kind: ModelKind,
}

/// Drift of the state under the risk-neutral measure together with the
/// shared diffusion parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskNeutralParams<T> {
    pub a: Mat2<T>,
    pub b: Vec2<T>,
    pub alpha: Vec2<T>,
    pub beta: Mat2<T>,
    pub sigma: Mat2<T>,
    pub lambda: Vec2<T>,
}

impl<T: Scalar> RiskNeutralParams<T> {
    /// Inverse of [`PhysicalParams::to_risk_neutral`]: `(â, b̂)`.
    pub fn physical_drift(&self) -> (Mat2<T>, Vec2<T>) {
        let a_hat = self.a + self.sigma * self.beta.scale_rows(self.lambda);
        let b_hat = self.b + self.sigma * self.alpha.hadamard(self.lambda);
        (a_hat, b_hat)
    }
}

/// `δ` in `r = δ₀ + δᵀx` with `δ₀ = 0`: the short rate in per-quarter
/// fractions is the sum of the two factors converted from annual percent.
pub fn short_rate_loading<T: Scalar>() -> Vec2<T> {
    Vec2::splat(units::to_per_quarter(T::one()))
}

/// Short rate in per-quarter fractions.
pub fn short_rate<T: Scalar>(x: StateVec<T>) -> T {
    units::to_per_quarter(x.0[0] + x.0[1])
}

/// Elementwise `max(v, 0)`.
pub fn vol_floor<T: Scalar>(v: VolatilityVec<T>) -> VolatilityVec<T> {
    v.map(|vi| vi.max_of(T::zero()))
}

/// True when both eigenvalues of `m` lie strictly inside the unit circle.
pub fn is_stable<T: Scalar>(m: &Mat2<T>) -> bool {
    let det = m.det();
    det.abs() < T::one() && m.trace().abs() < T::one() + det
}

impl<T: Scalar> PhysicalParams<T> {
    /// `α + βx`, unfloored.
    pub fn volatility(&self, x: StateVec<T>) -> VolatilityVec<T> {
        self.alpha + self.beta.mul_vec(x)
    }

    /// `I + â`.
    pub fn persistence(&self) -> Mat2<T> {
        Mat2::identity() + self.a_hat
    }

    /// `Σ(β⊙λ)`, the drift-matrix shift between the two measures.
    pub fn risk_premium_matrix(&self) -> Mat2<T> {
        self.sigma * self.beta.scale_rows(self.lambda)
    }

    /// `Σ(α⊙λ)`.
    pub fn risk_premium_offset(&self) -> Vec2<T> {
        self.sigma * self.alpha.hadamard(self.lambda)
    }

    pub fn to_risk_neutral(&self) -> RiskNeutralParams<T> {
        RiskNeutralParams {
            a: self.a_hat - self.risk_premium_matrix(),
            b: self.b_hat - self.risk_premium_offset(),
            alpha: self.alpha,
            beta: self.beta,
            sigma: self.sigma,
            lambda: self.lambda,
        }
    }

    /// Replaces the drift, the diffusion parameters and `λ` by those implied
    /// by `rn`, keeping the observation-noise parameters and the kind.
    pub fn with_risk_neutral(&self, rn: &RiskNeutralParams<T>) -> Self {
        let (a_hat, b_hat) = rn.physical_drift();
        PhysicalParams {
            a_hat,
            b_hat,
            alpha: rn.alpha,
            beta: rn.beta,
            sigma: rn.sigma,
            lambda: rn.lambda,
            ..*self
        }
    }

    /// `-â⁻¹ b̂`, the stationary mean of the physical dynamics.
    pub fn equilibrium_state(&self) -> Result<StateVec<T>, ModelError> {
        let inv = self.a_hat.inverse().ok_or(ModelError::SingularDrift)?;
        if !is_stable(&self.persistence()) {
            return Err(ModelError::NonStationary);
        }
        Ok(-inv.mul_vec(self.b_hat))
    }

    /// Sets `b̂ = -â x*` so that `x*` becomes the equilibrium state.
    pub fn with_equilibrium(mut self, x_star: StateVec<T>) -> Self {
        self.b_hat = -self.a_hat.mul_vec(x_star);
        self
    }

    /// Offset `c = α₂ − α₁` of the dependent-volatility case.
    pub fn dependent_offset(&self) -> T {
        self.alpha.0[1] - self.alpha.0[0]
    }

    /// Checks the identification rules and sign restrictions of the declared
    /// kind. `tol` is the absolute tolerance for equality constraints.
    pub fn validate(&self, tol: T) -> Result<(), ModelError> {
        let one = T::one();
        let zero = T::zero();
        let eq = |a: T, b: T| (a - b).abs() <= tol;
        if !eq(self.sigma.at(0, 0), one) {
            return Err(ModelError::constraint(
                "sigma[0][0]",
                "must equal 1 (identification)",
            ));
        }
        for (name, value) in [
            ("omega_pi", self.omega_pi),
            ("omega_s", self.omega_s),
            ("nu[0]", self.nu0),
            ("nu[1]", self.nu1),
            ("nu[2]", self.nu2),
        ] {
            if value < zero {
                return Err(ModelError::constraint(name, "must be nonnegative"));
            }
        }
        let rows_equal = |j: usize| eq(self.beta.at(0, j), self.beta.at(1, j));
        match self.kind {
            ModelKind::Proportional | ModelKind::DependentNonProportional => {
                for j in 0..2 {
                    if !rows_equal(j) {
                        return Err(ModelError::constraint(
                            format!("beta[1][{j}]"),
                            "rows of beta must be equal for proportional and dependent volatilities",
                        ));
                    }
                }
            }
            ModelKind::Independent => {}
        }
        match self.kind {
            ModelKind::Proportional => {
                if !eq(self.sigma.at(0, 1), zero) {
                    return Err(ModelError::constraint(
                        "sigma[0][1]",
                        "must equal 0 for proportional volatilities (identification)",
                    ));
                }
                if !eq(self.alpha.0[0], self.alpha.0[1]) {
                    return Err(ModelError::constraint(
                        "alpha[1]",
                        "must equal alpha[0] for proportional volatilities",
                    ));
                }
            }
            ModelKind::DependentNonProportional => {
                if self.dependent_offset() <= zero {
                    return Err(ModelError::constraint(
                        "alpha[1]",
                        "dependent volatilities need c = alpha[1] - alpha[0] > 0",
                    ));
                }
            }
            ModelKind::Independent => {
                if !eq(self.sigma.at(1, 1), one) {
                    return Err(ModelError::constraint(
                        "sigma[1][1]",
                        "must equal 1 for independent volatilities (identification)",
                    ));
                }
                if self.beta.det().abs() <= tol * self.beta.norm_sq() || self.beta.det() == zero {
                    return Err(ModelError::constraint(
                        "beta",
                        "independent volatilities need det beta != 0",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Converts every scalar with `f`.
    pub fn cast<U: Scalar>(&self, f: impl Fn(T) -> U + Copy) -> PhysicalParams<U> {
        PhysicalParams {
            a_hat: self.a_hat.cast(f),
            b_hat: self.b_hat.cast(f),
            alpha: self.alpha.cast(f),
            beta: self.beta.cast(f),
            sigma: self.sigma.cast(f),
            lambda: self.lambda.cast(f),
            omega_pi: f(self.omega_pi),
            omega_s: f(self.omega_s),
            nu0: f(self.nu0),
            nu1: f(self.nu1),
            nu2: f(self.nu2),
            kind: self.kind,
        }
    }
}

impl PhysicalParams<f64> {
    /// Spectral radius of `I + â`.
    pub fn persistence_spectral_radius(&self) -> f64 {
        let m = self.persistence();
        let tr = m.trace();
        let det = m.det();
        let disc = tr * tr / 4.0 - det;
        if disc >= 0.0 {
            let s = disc.sqrt();
            (tr / 2.0 + s).abs().max((tr / 2.0 - s).abs())
        } else {
            det.sqrt()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn toy() -> PhysicalParams<f64> {
        PhysicalParams {
            a_hat: Mat2::new(-0.1, 0.02, 0.01, -0.05),
            b_hat: Vec2::new(0.2, 0.1),
            alpha: Vec2::new(0.3, 0.3),
            beta: Mat2::new(0.1, 0.2, 0.1, 0.2),
            sigma: Mat2::new(1.0, 0.0, -0.3, 0.6),
            lambda: Vec2::new(0.2, -0.1),
            omega_pi: 1.0,
            omega_s: 0.1,
            nu0: 1e-4,
            nu1: 0.0,
            nu2: 0.0,
            kind: ModelKind::Proportional,
        }
    }

    #[test]
    fn volatility_identity_case() {
        let mut p = toy();
        p.alpha = Vec2::zero();
        p.beta = Mat2::identity();
        assert_eq!(p.volatility(Vec2::new(1.0, 2.0)), Vec2::new(1.0, 2.0));
    }

    #[test]
    fn volatility_at_table1_equilibrium() {
        let p = fixtures::table1_proportional();
        let v = p.volatility(Vec2::new(2.36, 3.05));
        let expected = -0.377 + 0.105 * 2.36 + 0.230 * 3.05;
        assert!((v.0[0] - expected).abs() < 1e-15);
        assert!((v.0[1] - expected).abs() < 1e-15);
        assert!((v.0[0] - 0.572).abs() < 5e-4);
    }

    #[test]
    fn volatility_vanishes_on_affine_root() {
        let mut p = toy();
        let x = Vec2::new(1.5, -0.5);
        p.alpha = -p.beta.mul_vec(x);
        assert_eq!(p.volatility(x), Vec2::zero());
    }

    #[test]
    fn vol_floor_examples() {
        assert_eq!(vol_floor(Vec2::new(-0.3, 0.5)), Vec2::new(0.0, 0.5));
        assert_eq!(vol_floor(Vec2::new(0.0, 0.0)), Vec2::new(0.0, 0.0));
        assert_eq!(vol_floor(Vec2::new(1.2, 3.4)), Vec2::new(1.2, 3.4));
    }

    #[test]
    fn zero_market_price_of_risk_keeps_drift() {
        let mut p = toy();
        p.lambda = Vec2::zero();
        let rn = p.to_risk_neutral();
        assert_eq!(rn.a, p.a_hat);
        assert_eq!(rn.b, p.b_hat);
    }

    #[test]
    fn risk_neutral_map_matches_hand_evaluation_on_table1() {
        let p = fixtures::table1_proportional();
        let rn = p.to_risk_neutral();
        // Σ(β⊙λ) with β rows scaled by λ_i, written out entry by entry.
        let (l1, l2) = (0.105, -0.129);
        let (b11, b12) = (0.105, 0.230);
        let s = [[1.0, 0.0], [-0.257, 0.639]];
        let bl = [[l1 * b11, l1 * b12], [l2 * b11, l2 * b12]];
        #[allow(clippy::needless_range_loop)]
        for i in 0..2 {
            for j in 0..2 {
                let shift = s[i][0] * bl[0][j] + s[i][1] * bl[1][j];
                let a_hat = if i == j {
                    [0.926, 0.938][i] - 1.0
                } else {
                    [0.087, -0.002][i]
                };
                assert!((rn.a.at(i, j) - (a_hat - shift)).abs() < 1e-15);
            }
        }
        let alpha = -0.377;
        let al = [l1 * alpha, l2 * alpha];
        #[allow(clippy::needless_range_loop)]
        for i in 0..2 {
            let shift = s[i][0] * al[0] + s[i][1] * al[1];
            assert!((rn.b.0[i] - (p.b_hat.0[i] - shift)).abs() < 1e-15);
        }
    }

    #[test]
    fn risk_neutral_round_trip_is_exact_in_rationals() {
        let p = fixtures::exact("table1_prop");
        let back = p.with_risk_neutral(&p.to_risk_neutral());
        assert_eq!(back, p);
    }

    #[test]
    fn equilibrium_examples() {
        let mut p = toy();
        p.a_hat = Mat2::identity().scale(-1.0);
        p.b_hat = Vec2::new(1.0, 1.0);
        assert_eq!(p.equilibrium_state().unwrap(), Vec2::new(1.0, 1.0));

        let t1 = fixtures::table1_proportional().equilibrium_state().unwrap();
        assert!((t1 - Vec2::new(2.36, 3.05)).max_abs() < 1e-12);
        let t2 = fixtures::table2_independent().equilibrium_state().unwrap();
        assert!((t2 - Vec2::new(2.91, 2.83)).max_abs() < 1e-12);
    }

    #[test]
    fn singular_and_explosive_drifts_are_rejected() {
        let mut p = toy();
        p.a_hat = Mat2::new(-0.1, 0.2, -0.1, 0.2);
        assert_eq!(p.equilibrium_state(), Err(ModelError::SingularDrift));
        p.a_hat = Mat2::new(0.05, 0.0, 0.0, -0.1);
        assert_eq!(p.equilibrium_state(), Err(ModelError::NonStationary));
    }

    #[test]
    fn short_rate_examples() {
        assert_eq!(short_rate(Vec2::new(0.0, 0.0)), 0.0);
        assert_eq!(short_rate(Vec2::new(2.0, 2.0)), 0.01);
        assert!((short_rate(Vec2::new(2.36_f64, 3.05)) - 0.013525).abs() < 1e-15);
    }

    #[test]
    fn validation_reports_field_paths() {
        let mut p = toy();
        p.sigma = Mat2::new(1.1, 0.0, 0.0, 1.0);
        match p.validate(1e-9) {
            Err(ModelError::Constraint { field, .. }) => assert_eq!(field, "sigma[0][0]"),
            other => panic!("unexpected {other:?}"),
        }
        let mut p = toy();
        p.kind = ModelKind::DependentNonProportional;
        assert!(p.validate(1e-9).is_err(), "c = 0 must be rejected");
        p.alpha = Vec2::new(0.3, 0.5);
        p.validate(1e-9).unwrap();
        let mut p = toy();
        p.kind = ModelKind::Independent;
        p.sigma = Mat2::new(1.0, 0.0, 0.0, 1.0);
        assert!(p.validate(1e-9).is_err(), "det beta = 0");
        let mut p = toy();
        p.nu1 = -1.0;
        assert!(p.validate(1e-9).is_err());
    }

    #[test]
    fn fixtures_validate() {
        for (name, p) in fixtures::all() {
            p.validate(1e-9).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(p.persistence_spectral_radius() < 1.0, "{name}");
            assert!(is_stable(&p.persistence()), "{name}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn small() -> impl Strategy<Value = f64> {
            -1.0..1.0f64
        }

        proptest! {
            #[test]
            fn vol_floor_idempotent_and_monotone(a in small(), b in small(), da in 0.0..1.0f64, db in 0.0..1.0f64) {
                let v = Vec2::new(a, b);
                prop_assert_eq!(vol_floor(vol_floor(v)), vol_floor(v));
                let w = Vec2::new(a + da, b + db);
                let (fv, fw) = (vol_floor(v), vol_floor(w));
                prop_assert!(fv.0[0] <= fw.0[0] && fv.0[1] <= fw.0[1]);
            }

            #[test]
            fn measure_maps_invert(vals in proptest::collection::vec(small(), 14)) {
                let mut p = toy();
                p.a_hat = Mat2::new(vals[0], vals[1], vals[2], vals[3]).scale(0.2);
                p.b_hat = Vec2::new(vals[4], vals[5]);
                p.alpha = Vec2::new(vals[6], vals[7]);
                p.beta = Mat2::new(vals[8], vals[9], vals[10], vals[11]);
                p.lambda = Vec2::new(vals[12], vals[13]);
                let back = p.with_risk_neutral(&p.to_risk_neutral());
                prop_assert!((back.a_hat - p.a_hat).max_abs() <= 1e-13);
                prop_assert!((back.b_hat - p.b_hat).max_abs() <= 1e-13);
                let rn = p.to_risk_neutral();
                let rn_back = back.to_risk_neutral();
                prop_assert!((rn_back.a - rn.a).max_abs() <= 1e-13);
                prop_assert!((rn_back.b - rn.b).max_abs() <= 1e-13);
            }

            #[test]
            fn equilibrium_solves_drift(vals in proptest::collection::vec(small(), 6)) {
                let mut p = toy();
                p.a_hat = Mat2::new(-0.3 + 0.1 * vals[0], 0.1 * vals[1], 0.1 * vals[2], -0.3 + 0.1 * vals[3]);
                p.b_hat = Vec2::new(vals[4], vals[5]);
                let x = p.equilibrium_state().unwrap();
                let resid = p.a_hat.mul_vec(x) + p.b_hat;
                prop_assert!(resid.max_abs() <= 1e-12);
            }
        }
    }
}
