//! Exact rational helpers and their JSON encoding.
//!
//! Rationals travel as `{"num": "<int>", "den": "<int>"}` with decimal
//! strings so that arbitrarily large values survive the round trip.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub type Rational = BigRational;

pub fn rat(num: i64, den: i64) -> Rational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(v: i64) -> Rational {
    BigRational::from_integer(BigInt::from(v))
}

pub fn from_big(v: &BigUint) -> Rational {
    BigRational::from_integer(BigInt::from(v.clone()))
}

pub fn ratio_of(num: &BigUint, den: &BigUint) -> Rational {
    BigRational::new(BigInt::from(num.clone()), BigInt::from(den.clone()))
}

pub fn pow2(exp: u32) -> BigUint {
    BigUint::one() << exp as usize
}

/// Parses `"3"`, `"-3/8"` or a terminating decimal such as `"0.125"` exactly.
pub fn parse(text: &str) -> Option<Rational> {
    let t = text.trim();
    if let Some((n, d)) = t.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        return (!d.is_zero()).then(|| BigRational::new(n, d));
    }
    if let Some((whole, frac)) = t.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let negative = whole.starts_with('-');
        let whole: BigInt = match whole.trim_start_matches(['-', '+']) {
            "" => BigInt::zero(),
            w => w.parse().ok()?,
        };
        let frac_num: BigInt = frac.parse().ok()?;
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        let v = BigRational::new(whole * &scale + frac_num, scale);
        return Some(if negative { -v } else { v });
    }
    t.parse::<BigInt>().ok().map(BigRational::from_integer)
}

/// Best-effort decimal rendering; huge values saturate to infinities.
pub fn to_f64(r: &Rational) -> f64 {
    if let Some(v) = r.to_f64() {
        if v.is_finite() {
            return v;
        }
    }
    // Shift both parts down so the quotient fits in a double.
    let bits_n = r.numer().bits() as i64;
    let bits_d = r.denom().bits() as i64;
    let shift_n = (bits_n - 900).max(0) as usize;
    let shift_d = (bits_d - 900).max(0) as usize;
    let n = (r.numer() >> shift_n).to_f64().unwrap_or(f64::NAN);
    let d = (r.denom() >> shift_d).to_f64().unwrap_or(f64::NAN);
    n / d * 2f64.powi((shift_n as i64 - shift_d as i64) as i32)
}

#[derive(Serialize, Deserialize)]
struct Wire {
    num: String,
    den: String,
}

pub fn to_wire<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
    Wire {
        num: r.numer().to_string(),
        den: r.denom().to_string(),
    }
    .serialize(s)
}

fn parse_wire<E: serde::de::Error>(w: Wire) -> Result<Rational, E> {
    let num: BigInt = w.num.parse().map_err(E::custom)?;
    let den: BigInt = w.den.parse().map_err(E::custom)?;
    if den.is_zero() {
        return Err(E::custom("zero denominator"));
    }
    Ok(BigRational::new(num, den))
}

pub fn from_wire<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
    parse_wire(Wire::deserialize(d)?)
}

/// `#[serde(with = "crate::rational::serde_rational")]` adaptor.
pub mod serde_rational {
    pub use super::from_wire as deserialize;
    pub use super::to_wire as serialize;
}

/// Big unsigned integers as decimal strings.
pub mod serde_big {
    use num_bigint::BigUint;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}

/// Vectors of big unsigned integers as arrays of decimal strings.
pub mod serde_big_vec {
    use num_bigint::BigUint;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[BigUint], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(ToString::to_string).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigUint>, D::Error> {
        Vec::<String>::deserialize(d)?
            .into_iter()
            .map(|t| t.parse().map_err(D::Error::custom))
            .collect()
    }
}

/// Newtype carrying the wire format, for use inside containers.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Exact(#[serde(with = "serde_rational")] pub Rational);

impl From<Rational> for Exact {
    fn from(r: Rational) -> Self {
        Exact(r)
    }
}

/// A ratio-imbalance statistic that is infinite when one side is empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Bias {
    Finite(Rational),
    Infinite,
}

impl Bias {
    /// `max(p, q) / min(p, q) - 1`, infinite when the minimum is zero.
    pub fn from_pair(p: &BigUint, q: &BigUint) -> Bias {
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        if lo.is_zero() {
            Bias::Infinite
        } else {
            Bias::Finite(ratio_of(hi, lo) - Rational::one())
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Bias::Finite(_))
    }

    pub fn finite(&self) -> Option<&Rational> {
        match self {
            Bias::Finite(r) => Some(r),
            Bias::Infinite => None,
        }
    }

    pub fn le(&self, bound: &Rational) -> bool {
        match self {
            Bias::Finite(r) => r <= bound,
            Bias::Infinite => false,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Bias::Finite(r) => to_f64(r),
            Bias::Infinite => f64::INFINITY,
        }
    }
}

impl PartialOrd for Bias {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Bias {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Bias::Finite(a), Bias::Finite(b)) => a.cmp(b),
            (Bias::Finite(_), Bias::Infinite) => Ordering::Less,
            (Bias::Infinite, Bias::Finite(_)) => Ordering::Greater,
            (Bias::Infinite, Bias::Infinite) => Ordering::Equal,
        }
    }
}

impl fmt::Display for Bias {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bias::Finite(r) => write!(f, "{r}"),
            Bias::Infinite => f.write_str("infinite"),
        }
    }
}

impl Serialize for Bias {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Bias::Finite(r) => to_wire(r, s),
            Bias::Infinite => s.serialize_str("infinite"),
        }
    }
}

impl<'de> Deserialize<'de> for Bias {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Tag(String),
            Value(Wire),
        }
        match Repr::deserialize(d)? {
            Repr::Tag(t) if t == "infinite" => Ok(Bias::Infinite),
            Repr::Tag(t) => Err(D::Error::custom(format!("unknown bias tag {t:?}"))),
            Repr::Value(w) => parse_wire(w).map(Bias::Finite),
        }
    }
}

/// Decides `lhs <= coeff * sqrt(radicand)` exactly for rational `lhs`, `coeff`.
pub fn le_scaled_sqrt(lhs: &Rational, coeff: &Rational, radicand: &Rational) -> bool {
    assert!(!radicand.is_negative(), "negative radicand");
    let rhs_sign_nonneg = !coeff.is_negative();
    match (lhs.is_positive(), rhs_sign_nonneg) {
        // lhs <= 0 <= rhs
        (false, true) => true,
        // lhs > 0 >= rhs unless radicand vanishes
        (true, false) => false,
        (true, true) => lhs * lhs <= coeff * coeff * radicand,
        // both sides nonpositive: |lhs| >= |rhs|
        (false, false) => lhs * lhs >= coeff * coeff * radicand,
    }
}
