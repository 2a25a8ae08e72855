//! Exact rational arithmetic helpers.
//!
//! All coefficients, offsets and penalty factors in the pipeline are exact
//! fractions with arbitrary-precision components; squared-sum expansions
//! overflow 64-bit integers on modest inputs.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};

pub type Rat = BigRational;

pub fn rat(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

pub fn rat_frac(num: i64, den: i64) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

pub fn is_integer(r: &Rat) -> bool {
    r.denom().is_one()
}

/// Exact integer value of `r`, if it is an integer that fits in i64.
pub fn to_i64(r: &Rat) -> Option<i64> {
    if is_integer(r) {
        r.numer().to_i64()
    } else {
        None
    }
}

pub fn floor_i64(r: &Rat) -> i64 {
    r.floor().numer().to_i64().expect("floor out of i64 range")
}

pub fn ceil_i64(r: &Rat) -> i64 {
    r.ceil().numer().to_i64().expect("ceil out of i64 range")
}

pub fn to_f64(r: &Rat) -> f64 {
    r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN)
}

/// Least common multiple of two positive BigInts.
pub fn lcm_big(a: &BigInt, b: &BigInt) -> BigInt {
    num::Integer::lcm(a, b)
}

/// Renders `p` or `p/q`, reduced. Matches the `.qubo` file grammar.
pub fn format_rat(r: &Rat) -> String {
    if is_integer(r) {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Parses `p` or `p/q`. Denominator must be positive after reduction.
pub fn parse_rat(s: &str) -> Option<Rat> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let num: BigInt = p.trim().parse().ok()?;
        let den: BigInt = q.trim().parse().ok()?;
        if den.is_zero() {
            return None;
        }
        Some(Rat::new(num, den))
    } else {
        let num: BigInt = s.parse().ok()?;
        Some(Rat::from_integer(num))
    }
}

pub fn rat_abs(r: &Rat) -> Rat {
    r.abs()
}
