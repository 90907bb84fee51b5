//! Discrete Riccati recursions for the exponentially affine bond price
//! `exp(A_n + B_nᵀ x)`.

use thiserror::Error;

use crate::linalg::{Mat2, Vec2};
use crate::model::{short_rate_loading, PhysicalParams, RiskNeutralParams, StateVec};
use crate::scalar::{Real, Scalar};
use crate::units;

/// Longest yield in the data set: 30 years of quarters.
pub const DEFAULT_MAX_MATURITY: usize = 120;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RiccatiError {
    #[error("maturity {n} exceeds the table's maximum {max}")]
    OutOfRange { n: usize, max: usize },
    #[error("yield at maturity 0 is undefined")]
    ZeroMaturity,
}

/// Coefficients `A_n` and `B_n` for `n = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiTable<T> {
    a: Vec<T>,
    b: Vec<Vec2<T>>,
}

impl<T: Scalar> RiccatiTable<T> {
    pub fn max_maturity(&self) -> usize {
        self.a.len() - 1
    }

    pub fn a(&self) -> &[T] {
        &self.a
    }

    pub fn b(&self) -> &[Vec2<T>] {
        &self.b
    }

    fn check(&self, n: usize) -> Result<(), RiccatiError> {
        if n > self.max_maturity() {
            return Err(RiccatiError::OutOfRange {
                n,
                max: self.max_maturity(),
            });
        }
        Ok(())
    }

    /// `A_n + B_nᵀ x`.
    pub fn log_price(&self, x: StateVec<T>, n: usize) -> Result<T, RiccatiError> {
        self.check(n)?;
        Ok(self.a[n] + self.b[n].dot(x))
    }

    /// `-(A_n + B_nᵀ x)/n` in per-quarter fractions.
    pub fn analytic_yield(&self, x: StateVec<T>, n: usize) -> Result<T, RiccatiError> {
        if n == 0 {
            return Err(RiccatiError::ZeroMaturity);
        }
        Ok(-self.log_price(x, n)? / T::from_usize(n).expect("maturity as scalar"))
    }

    /// Yield in annualized percent.
    pub fn analytic_yield_annual(&self, x: StateVec<T>, n: usize) -> Result<T, RiccatiError> {
        self.analytic_yield(x, n).map(units::to_annual_percent)
    }

    /// Loadings of the per-quarter yield on the state: `(-A_n/n, -B_n/n)`.
    pub fn yield_loading(&self, n: usize) -> Result<(T, Vec2<T>), RiccatiError> {
        if n == 0 {
            return Err(RiccatiError::ZeroMaturity);
        }
        self.check(n)?;
        let nn = T::from_usize(n).expect("maturity as scalar");
        Ok((-self.a[n] / nn, self.b[n].scale(-T::one() / nn)))
    }
}

impl<T: Real> RiccatiTable<T> {
    /// `exp(A_n + B_nᵀ x)`.
    pub fn analytic_price(&self, x: StateVec<T>, n: usize) -> Result<T, RiccatiError> {
        self.log_price(x, n).map(T::exp)
    }
}

/// Runs the recursion for a given risk-neutral persistence `I + a` and offset
/// `b`, with `δ₀ = 0` and `δ = (1/400, 1/400)`.
fn recurse<T: Scalar>(
    persistence: Mat2<T>,
    offset: Vec2<T>,
    alpha: Vec2<T>,
    beta: &Mat2<T>,
    sigma: &Mat2<T>,
    max_n: usize,
) -> RiccatiTable<T> {
    let delta = short_rate_loading::<T>();
    let half = T::half();
    let mut a = Vec::with_capacity(max_n + 1);
    let mut b = Vec::with_capacity(max_n + 1);
    let (mut an, mut bn) = (T::zero(), Vec2::zero());
    a.push(an);
    b.push(bn);
    for _ in 0..max_n {
        let load = sigma.tr_mul_vec(bn);
        let load_sq = load.hadamard(load);
        let next_a = an + offset.dot(bn) + half * alpha.dot(load_sq);
        let next_b = persistence.tr_mul_vec(bn) + beta.tr_mul_vec(load_sq).scale(half) - delta;
        an = next_a;
        bn = next_b;
        a.push(an);
        b.push(bn);
    }
    RiccatiTable { a, b }
}

/// Recursion in risk-neutral parameters `(a, b)`.
pub fn riccati_q<T: Scalar>(rn: &RiskNeutralParams<T>, max_n: usize) -> RiccatiTable<T> {
    recurse(
        Mat2::identity() + rn.a,
        rn.b,
        rn.alpha,
        &rn.beta,
        &rn.sigma,
        max_n,
    )
}

/// Recursion in physical parameters, `(I + â − Σ(β⊙λ))ᵀ` and `b̂ − Σ(α⊙λ)`.
pub fn riccati_p<T: Scalar>(p: &PhysicalParams<T>, max_n: usize) -> RiccatiTable<T> {
    let persistence = Mat2::identity() + p.a_hat - p.risk_premium_matrix();
    let offset = p.b_hat - p.risk_premium_offset();
    recurse(persistence, offset, p.alpha, &p.beta, &p.sigma, max_n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::scalar::Rational;

    #[test]
    fn empty_table() {
        let p = fixtures::table1_proportional();
        let t = riccati_q(&p.to_risk_neutral(), 0);
        assert_eq!(t.a(), &[0.0]);
        assert_eq!(t.b(), &[Vec2::zero()]);
        assert_eq!(riccati_p(&p, 0), t);
    }

    #[test]
    fn first_step_prices_the_short_rate() {
        let p = fixtures::table1_dependent();
        let t = riccati_q(&p.to_risk_neutral(), 1);
        assert_eq!(t.a()[1], 0.0);
        assert_eq!(t.b()[1], Vec2::new(-1.0 / 400.0, -1.0 / 400.0));
        let x = Vec2::new(2.36, 3.05);
        let y = t.analytic_yield(x, 1).unwrap();
        assert!((y - 0.013525).abs() < 1e-15);
        assert!((t.analytic_yield_annual(x, 1).unwrap() - 5.41).abs() < 1e-12);
        let price = t.analytic_price(Vec2::new(2.0, 2.0), 1).unwrap();
        assert_eq!(price, (-0.01f64).exp());
    }

    #[test]
    fn zero_maturity_prices_at_par() {
        let p = fixtures::table2_independent();
        let t = riccati_p(&p, 10);
        assert_eq!(t.analytic_price(Vec2::new(-3.0, 7.0), 0).unwrap(), 1.0);
        assert_eq!(
            t.analytic_yield(Vec2::zero(), 0),
            Err(RiccatiError::ZeroMaturity)
        );
        assert_eq!(
            t.analytic_price(Vec2::zero(), 11),
            Err(RiccatiError::OutOfRange { n: 11, max: 10 })
        );
    }

    #[test]
    fn zero_market_price_of_risk_collapses_both_forms() {
        let mut p = fixtures::table1_independent();
        p.lambda = Vec2::zero();
        let rn = RiskNeutralParams {
            a: p.a_hat,
            b: p.b_hat,
            alpha: p.alpha,
            beta: p.beta,
            sigma: p.sigma,
            lambda: p.lambda,
        };
        assert_eq!(riccati_p(&p, 50), riccati_q(&rn, 50));
    }

    #[test]
    fn yield_vanishes_where_exponent_does() {
        let p = fixtures::table1_proportional();
        let t = riccati_p(&p, 40);
        let n = 40;
        // Pick x on the line A_n + B_nᵀx = 0.
        let bn = t.b()[n];
        let x = bn.scale(-t.a()[n] / bn.norm_sq());
        assert!(t.analytic_yield(x, n).unwrap().abs() < 1e-15);
    }

    #[test]
    fn forms_agree_on_fixtures() {
        for (name, p) in fixtures::all() {
            let tp = riccati_p(&p, 200);
            let tq = riccati_q(&p.to_risk_neutral(), 200);
            for n in 0..=200 {
                assert!((tp.a()[n] - tq.a()[n]).abs() <= 1e-12, "{name} A[{n}]");
                assert!((tp.b()[n] - tq.b()[n]).max_abs() <= 1e-12, "{name} B[{n}]");
            }
            let x = p.equilibrium_state().unwrap();
            for n in 1..=DEFAULT_MAX_MATURITY {
                assert!(tp.analytic_yield(x, n).unwrap().is_finite(), "{name} n={n}");
            }
        }
    }

    #[test]
    fn forms_agree_exactly_in_rationals() {
        let p = fixtures::exact("table2_prop");
        let tp = riccati_p(&p, 3);
        let tq = riccati_q(&p.to_risk_neutral(), 3);
        assert_eq!(tp, tq);
        assert_eq!(tp.b()[1], Vec2::splat(Rational::new(-1, 400)));
    }

    #[test]
    fn constant_volatility_matches_geometric_series() {
        let mut p = fixtures::table1_proportional();
        p.alpha = Vec2::zero();
        p.beta = Mat2::zero();
        let t = riccati_p(&p, 150);
        let m = p.persistence().transpose();
        let delta = Vec2::splat(1.0 / 400.0);
        // B_n = -(I + Mᵀ + … + (Mᵀ)^{n-1}) δ = -(I - Mᵀ)⁻¹ (I - (Mᵀ)^n) δ.
        let inv = (Mat2::identity() - m).inverse().unwrap();
        let mut power = Mat2::identity();
        for n in 0..=150 {
            let closed = -(inv * (Mat2::identity() - power)).mul_vec(delta);
            assert!((t.b()[n] - closed).max_abs() <= 1e-12, "n={n}");
            power = power * m;
        }
    }

    #[test]
    fn first_step_intercept_ignores_beta() {
        // A_1 = A_0 + bᵀB_0 + ½αᵀ(ΣᵀB_0)² = 0 whatever β; A_2 depends on β
        // only through B_1, which is β-free.
        let p = fixtures::table1_independent();
        let mut q = p;
        q.beta = q.beta.scale(1.7);
        let (tp, tq) = (
            riccati_q(&p.to_risk_neutral(), 2),
            riccati_q(&q.to_risk_neutral(), 2),
        );
        assert_eq!(tp.b()[1], tq.b()[1]);
        assert_eq!(tp.a()[2], tq.a()[2]);
        let rn = p.to_risk_neutral();
        let b1 = tp.b()[1];
        let load = rn.sigma.tr_mul_vec(b1);
        let expected = rn.b.dot(b1) + 0.5 * rn.alpha.dot(load.hadamard(load));
        assert!((tp.a()[2] - expected).abs() < 1e-18);
    }
}
