//! Scalar abstractions shared by the model, Feller and Riccati code.
//!
//! Everything that only needs field arithmetic (parameter maps, Feller
//! conditions, the Riccati recursions) is written against [`Scalar`], so it
//! runs on `f32`, `f64` and exact rationals alike. Code that needs square
//! roots, logarithms or exponentials asks for [`Real`].

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, Num, Signed};

/// Exact rational scalar used for tie-free evaluation of equality constraints.
pub type Rational = num_rational::Ratio<i128>;

/// Field arithmetic with ordering.
pub trait Scalar:
    Copy + Num + Signed + PartialOrd + FromPrimitive + Debug + Send + Sync + 'static
{
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("scalar conversion from f64")
    }

    fn of_int(value: i64) -> Self {
        Self::from_i64(value).expect("scalar conversion from i64")
    }

    fn half() -> Self {
        Self::one() / (Self::one() + Self::one())
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl<T> Scalar for T where
    T: Copy + Num + Signed + PartialOrd + FromPrimitive + Debug + Send + Sync + 'static
{
}

/// Floating-point scalar.
pub trait Real: Scalar + Float {}

impl<T> Real for T where T: Scalar + Float {}

/// Parses a plain decimal literal (`-0.377`, `12`, `1.5e-3`) into an exact
/// rational.
pub fn rational_from_decimal(text: &str) -> Option<Rational> {
    let text = text.trim();
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(pos) => (&text[..pos], text[pos + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match digits.find('.') {
        Some(pos) => (&digits[..pos], &digits[pos + 1..]),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part
        .bytes()
        .chain(frac_part.bytes())
        .all(|b| b.is_ascii_digit())
    {
        return None;
    }
    let joined = format!("{int_part}{frac_part}");
    let mut numer: i128 = if joined.is_empty() {
        0
    } else {
        joined.parse().ok()?
    };
    if negative {
        numer = -numer;
    }
    let scale = exponent - frac_part.len() as i32;
    let ten = 10i128;
    let value = if scale >= 0 {
        Rational::from_integer(numer.checked_mul(ten.checked_pow(scale as u32)?)?)
    } else {
        Rational::new(numer, ten.checked_pow((-scale) as u32)?)
    };
    Some(value)
}

/// Exact rational equal to the shortest decimal representation of `value`,
/// i.e. the literal a human would have typed (`0.926`, not its binary
/// approximation).
pub fn rational_from_f64(value: f64) -> Option<Rational> {
    if !value.is_finite() {
        return None;
    }
    rational_from_decimal(&format!("{value}"))
}
