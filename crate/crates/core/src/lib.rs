//! Two-factor discrete-time affine term-structure models with square-root
//! volatility.
//!
//! The state `x = (x1, x2)` holds the ex-ante real short rate and expected
//! inflation in percent per year. The short rate is `r = (x1 + x2) / 400`
//! per quarter. Model parameters live under the physical measure; the
//! risk-neutral form is always derived.
//!
//! The parameter, Feller and Riccati layers are generic over the scalar type
//! (`f32`, `f64`, or the exact [`Rational`]). Simulation and filtering run in
//! `f64`.

pub mod cli_io;
pub mod feller;
pub mod fixtures;
pub mod linalg;
pub mod model;
pub mod montecarlo;
pub mod riccati;
pub mod scalar;
pub mod statespace;
pub mod units;

pub use feller::{check_feller, classify_beta, BetaClass, FellerReport, Measure, Tolerances};
pub use linalg::{Mat2, Vec2};
pub use model::{ModelKind, PhysicalParams, RiskNeutralParams, StateVec, VolatilityVec};
pub use montecarlo::{price_bond_mc, yield_diff_curve, Dynamics, MCEstimate, SimConfig};
pub use riccati::{riccati_p, riccati_q, RiccatiTable};
pub use scalar::{Rational, Real, Scalar};

/// Double-precision parameters, the working type for simulation and estimation.
pub type ModelParams = PhysicalParams<f64>;
/// Single-precision parameters.
pub type ModelParamsF32 = PhysicalParams<f32>;
/// Exact rational parameters for checking identities without rounding.
pub type ExactModelParams = PhysicalParams<Rational>;
pub type Table = RiccatiTable<f64>;
pub type ExactTable = RiccatiTable<Rational>;
pub type Report = FellerReport<f64>;
pub type ExactReport = FellerReport<Rational>;
