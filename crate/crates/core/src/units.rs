//! Unit conventions.
//!
//! State variables, inflation and all on-disk rates are annualized percent.
//! Bond pricing works in fractions per quarter. The two are related by the
//! single factor defined here.

use crate::scalar::Scalar;

/// Annualized percent per unit of per-quarter fraction.
const PERCENT_PER_QUARTER_FRACTION: i64 = 400;

pub fn annualization_factor<T: Scalar>() -> T {
    T::of_int(PERCENT_PER_QUARTER_FRACTION)
}

/// Per-quarter fraction → annualized percent.
pub fn to_annual_percent<T: Scalar>(per_quarter: T) -> T {
    per_quarter * annualization_factor()
}

/// Annualized percent → per-quarter fraction.
pub fn to_per_quarter<T: Scalar>(annual_percent: T) -> T {
    annual_percent / annualization_factor()
}

/// Basis points per annualized percent.
pub const BP_PER_PERCENT: f64 = 100.0;
