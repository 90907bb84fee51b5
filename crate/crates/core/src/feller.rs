//! Explicit two-dimensional Feller conditions.
//!
//! For each volatility structure the multivariate conditions reduce to a
//! short list of closed-form restrictions on the drift pair `(A, B)`, `α`,
//! `β` and `Σ`. Under the physical measure the pair is `(â, b̂)`, under the
//! risk-neutral measure `(a, b)`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{Mat2, Vec2};
use crate::model::{ModelKind, PhysicalParams};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Measure {
    P,
    Q,
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Measure::P => "P",
            Measure::Q => "Q",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionKind {
    StrictGt,
    Geq,
    EqZero,
}

impl ConditionKind {
    pub fn label(self) -> &'static str {
        match self {
            ConditionKind::StrictGt => "strict-gt",
            ConditionKind::Geq => "geq",
            ConditionKind::EqZero => "eq-zero",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FellerCondition<T> {
    pub id: &'static str,
    pub lhs: T,
    pub rhs: T,
    /// `lhs - rhs` for inequalities, `|lhs|` for equalities.
    pub margin: T,
    pub kind: ConditionKind,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FellerReport<T> {
    pub conditions: Vec<FellerCondition<T>>,
    pub overall: bool,
    pub measure: Measure,
}

impl<T: Scalar> FellerReport<T> {
    pub fn get(&self, id: &str) -> Option<&FellerCondition<T>> {
        self.conditions.iter().find(|c| c.id == id)
    }

    pub fn equalities_hold(&self) -> bool {
        self.conditions
            .iter()
            .filter(|c| c.kind == ConditionKind::EqZero)
            .all(|c| c.pass)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FellerError {
    #[error("{kind} volatilities need equal rows of beta")]
    RowsDiffer { kind: &'static str },
    #[error("proportional volatilities need alpha[0] = alpha[1]")]
    OffsetNonzero,
    #[error("dependent volatilities need c = alpha[1] - alpha[0] > 0")]
    OffsetNotPositive,
    #[error("independent volatilities need det beta != 0")]
    SingularBeta,
}

/// Tolerances for [`check_feller`].
#[derive(Debug, Clone, Copy)]
pub struct Tolerances<T> {
    /// Equalities pass iff `|lhs| <= eq`.
    pub eq: T,
    /// Strict inequalities pass iff `margin > ineq`, weak ones iff
    /// `margin >= ineq`.
    pub ineq: T,
}

impl<T: Scalar> Tolerances<T> {
    pub fn new(eq: T, ineq: T) -> Self {
        Tolerances { eq, ineq }
    }

    pub fn exact() -> Self {
        Tolerances::new(T::zero(), T::zero())
    }
}

impl Default for Tolerances<f64> {
    fn default() -> Self {
        Tolerances::new(1e-9, 0.0)
    }
}

fn gamma1<T: Scalar>(beta: &Mat2<T>) -> Vec2<T> {
    Vec2::new(-beta.at(0, 1), beta.at(0, 0))
}

fn gamma2<T: Scalar>(beta: &Mat2<T>) -> Vec2<T> {
    Vec2::new(beta.at(1, 1), -beta.at(1, 0))
}

/// `½ βᵢ Σ Σᵀ βᵢᵀ`.
fn diffusion_term<T: Scalar>(row: Vec2<T>, sigma: &Mat2<T>) -> T {
    T::half() * sigma.tr_mul_vec(row).norm_sq()
}

struct Builder<T> {
    tol: Tolerances<T>,
    conditions: Vec<FellerCondition<T>>,
}

impl<T: Scalar> Builder<T> {
    fn equality(&mut self, id: &'static str, lhs: T) {
        let margin = lhs.abs();
        self.conditions.push(FellerCondition {
            id,
            lhs,
            rhs: T::zero(),
            margin,
            kind: ConditionKind::EqZero,
            pass: margin <= self.tol.eq,
        });
    }

    fn inequality(&mut self, id: &'static str, kind: ConditionKind, lhs: T, rhs: T) {
        let margin = lhs - rhs;
        let pass = match kind {
            ConditionKind::StrictGt => margin > self.tol.ineq,
            _ => margin >= self.tol.ineq,
        };
        self.conditions.push(FellerCondition {
            id,
            lhs,
            rhs,
            margin,
            kind,
            pass,
        });
    }
}

/// Drift pair `(A, B)` used by the conditions under `measure`.
pub fn drift_pair<T: Scalar>(p: &PhysicalParams<T>, measure: Measure) -> (Mat2<T>, Vec2<T>) {
    match measure {
        Measure::P => (p.a_hat, p.b_hat),
        Measure::Q => {
            let rn = p.to_risk_neutral();
            (rn.a, rn.b)
        }
    }
}

fn check_structure<T: Scalar>(p: &PhysicalParams<T>, tol: T) -> Result<(), FellerError> {
    let rows_equal = (p.beta.row(0) - p.beta.row(1)).max_abs() <= tol;
    match p.kind {
        ModelKind::Proportional => {
            if !rows_equal {
                return Err(FellerError::RowsDiffer {
                    kind: "proportional",
                });
            }
            if (p.alpha.0[0] - p.alpha.0[1]).abs() > tol {
                return Err(FellerError::OffsetNonzero);
            }
        }
        ModelKind::DependentNonProportional => {
            if !rows_equal {
                return Err(FellerError::RowsDiffer { kind: "dependent" });
            }
            if p.dependent_offset() <= T::zero() {
                return Err(FellerError::OffsetNotPositive);
            }
        }
        ModelKind::Independent => {
            if p.beta.det() == T::zero() {
                return Err(FellerError::SingularBeta);
            }
        }
    }
    Ok(())
}

/// Evaluates the Feller restrictions of the declared volatility structure.
pub fn check_feller<T: Scalar>(
    p: &PhysicalParams<T>,
    measure: Measure,
    tol: Tolerances<T>,
) -> Result<FellerReport<T>, FellerError> {
    check_structure(p, tol.eq)?;
    let (a, b) = drift_pair(p, measure);
    let beta = p.beta;
    let b1 = beta.row(0);
    let b2 = beta.row(1);
    let mut out = Builder {
        tol,
        conditions: Vec::with_capacity(6),
    };

    match p.kind {
        ModelKind::Proportional | ModelKind::DependentNonProportional => {
            // Boundary point closest to the origin: -α₁ β₁ᵀ / |β₁|².
            let norm_sq = b1.norm_sq();
            let boundary_term = if norm_sq == T::zero() {
                T::zero()
            } else {
                -(p.alpha.0[0] / norm_sq) * b1.dot(a.mul_vec(b1))
            };
            out.inequality(
                "pv1",
                ConditionKind::StrictGt,
                boundary_term + b1.dot(b),
                diffusion_term(b1, &p.sigma),
            );
            out.equality("pv2", b1.dot(a.mul_vec(gamma1(&beta))));
            if p.kind == ModelKind::DependentNonProportional {
                out.equality("dv", b1.dot(p.sigma.col(1)));
            }
        }
        ModelKind::Independent => {
            let det = beta.det();
            let inv = beta.inverse().ok_or(FellerError::SingularBeta)?;
            let a_inv_alpha = a.mul_vec(inv.mul_vec(p.alpha));
            out.equality("iv1", b1.dot(p.sigma.col(1)));
            out.equality("iv2", b2.dot(p.sigma.col(0)));
            out.inequality(
                "iv3",
                ConditionKind::Geq,
                b1.dot(a.mul_vec(gamma1(&beta))) / det,
                T::zero(),
            );
            out.inequality(
                "iv4",
                ConditionKind::Geq,
                b2.dot(a.mul_vec(gamma2(&beta))) / det,
                T::zero(),
            );
            out.inequality(
                "iv5",
                ConditionKind::StrictGt,
                b1.dot(b) - b1.dot(a_inv_alpha),
                diffusion_term(b1, &p.sigma),
            );
            out.inequality(
                "iv6",
                ConditionKind::StrictGt,
                b2.dot(b) - b2.dot(a_inv_alpha),
                diffusion_term(b2, &p.sigma),
            );
        }
    }

    let overall = out.conditions.iter().all(|c| c.pass);
    Ok(FellerReport {
        conditions: out.conditions,
        overall,
        measure,
    })
}

/// Structure of `β` as seen by [`classify_beta`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaClass {
    /// `β = 0`: constant volatility.
    Degenerate,
    /// Equal rows: proportional or dependent, decided by `α`.
    EqualRows,
    /// Linearly dependent rows that differ; needs rescaling through `Σ`
    /// before it fits either dependent form.
    ProportionalRows,
    Independent,
}

/// Advisory classification of `β`. Never overrides a declared kind.
pub fn classify_beta<T: Scalar>(beta: &Mat2<T>, tol: T) -> BetaClass {
    let scale = beta.norm_sq();
    if scale <= tol * tol {
        return BetaClass::Degenerate;
    }
    if beta.det().abs() > tol * scale {
        return BetaClass::Independent;
    }
    if (beta.row(0) - beta.row(1)).max_abs() <= tol * beta.max_abs() {
        BetaClass::EqualRows
    } else {
        BetaClass::ProportionalRows
    }
}

/// Kind suggested by `β` and `α`, if any.
pub fn suggest_kind<T: Scalar>(p: &PhysicalParams<T>, tol: T) -> Option<ModelKind> {
    match classify_beta(&p.beta, tol) {
        BetaClass::Independent => Some(ModelKind::Independent),
        BetaClass::EqualRows | BetaClass::Degenerate => {
            let c = p.dependent_offset();
            if c.abs() <= tol {
                Some(ModelKind::Proportional)
            } else if c > T::zero() {
                Some(ModelKind::DependentNonProportional)
            } else {
                None
            }
        }
        BetaClass::ProportionalRows => None,
    }
}
