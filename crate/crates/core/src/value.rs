//! Exact rational values.
//!
//! Every quantity that takes part in a comparison (valuations, increments,
//! edge weights, competitive ratios) is a [`Value`], an arbitrary-precision
//! rational. Floating point only shows up when formatting reports.
//!
//! On the wire a value is a JSON integer when it is integral and fits in an
//! `i64`, and a string `"p/q"` otherwise. Decimal strings such as `"0.25"`
//! are accepted on input.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;

pub type Value = BigRational;

pub fn int(n: i64) -> Value {
    Value::from_integer(BigInt::from(n))
}

pub fn ratio(numer: i64, denom: i64) -> Value {
    Value::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn zero() -> Value {
    Value::zero()
}

pub fn to_f64(v: &Value) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// `base^exp` for a non-negative integer exponent.
pub fn pow(base: &Value, exp: u64) -> Value {
    let mut acc = Value::one();
    let mut b = base.clone();
    let mut e = exp;
    while e > 0 {
        if e & 1 == 1 {
            acc *= &b;
        }
        e >>= 1;
        if e > 0 {
            b = &b * &b;
        }
    }
    acc
}

/// Parses `"7"`, `"-3/4"` or `"0.125"`.
pub fn parse(text: &str) -> Result<Value, String> {
    let s = text.trim();
    if s.is_empty() {
        return Err("empty rational".into());
    }
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| format!("bad numerator in {s:?}"))?;
        let d: BigInt = d.trim().parse().map_err(|_| format!("bad denominator in {s:?}"))?;
        if d.is_zero() {
            return Err(format!("zero denominator in {s:?}"));
        }
        return Ok(Value::new(n, d));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        let negative = whole.starts_with('-');
        let digits = format!("{}{}", whole.trim_start_matches(['-', '+']), frac);
        if digits.is_empty() || !digits.bytes().all(|c| c.is_ascii_digit()) {
            return Err(format!("bad decimal {s:?}"));
        }
        let n: BigInt = digits.parse().map_err(|_| format!("bad decimal {s:?}"))?;
        let d = num_traits::pow(BigInt::from(10u8), frac.len());
        let v = Value::new(n, d);
        return Ok(if negative { -v } else { v });
    }
    let n: BigInt = s.parse().map_err(|_| format!("bad rational {s:?}"))?;
    Ok(Value::from_integer(n))
}

/// Canonical text form: `"p"` or `"p/q"`.
pub fn format(v: &Value) -> String {
    if v.is_integer() {
        v.numer().to_string()
    } else {
        format!("{}/{}", v.numer(), v.denom())
    }
}

pub fn to_json(v: &Value) -> serde_json::Value {
    if v.is_integer() {
        if let Some(n) = v.numer().to_i64() {
            return serde_json::Value::from(n);
        }
    }
    serde_json::Value::String(format(v))
}

/// Display wrapper that prints a value in canonical form followed by its
/// decimal approximation when it is not an integer.
pub struct Show<'a>(pub &'a Value);

impl fmt::Display for Show<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{} (~{:.6})", format(self.0), to_f64(self.0))
        }
    }
}

pub fn is_non_negative(v: &Value) -> bool {
    !v.is_negative()
}

struct ValueVisitor;

impl<'de> Visitor<'de> for ValueVisitor {
    type Value = Value;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("an integer or a rational string such as \"3/4\"")
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Value, E> {
        Ok(int(v))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Value, E> {
        Ok(Value::from_integer(BigInt::from(v)))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Value, E> {
        if v.fract() == 0.0 && v.abs() < 9.0e15 {
            Ok(int(v as i64))
        } else {
            Err(E::custom(format!(
                "non-integer number {v} is not exact; write it as a string such as \"1/2\""
            )))
        }
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Value, E> {
        parse(v).map_err(E::custom)
    }
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Value, D::Error> {
    d.deserialize_any(ValueVisitor)
}

pub fn serialize<S: Serializer>(v: &Value, s: S) -> Result<S::Ok, S::Error> {
    use serde::Serialize;
    to_json(v).serialize(s)
}

/// `#[serde(with = "crate::value::seq")]` for `Vec<Value>`.
pub mod seq {
    use super::*;
    use serde::{Deserialize, Serialize};

    #[derive(Deserialize)]
    struct Wrapped(#[serde(deserialize_with = "super::deserialize")] Value);

    pub fn serialize<S: Serializer>(vs: &[Value], s: S) -> Result<S::Ok, S::Error> {
        vs.iter().map(to_json).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Value>, D::Error> {
        let raw: Vec<Wrapped> = Vec::deserialize(d)?;
        Ok(raw.into_iter().map(|w| w.0).collect())
    }
}

/// `#[serde(with = "crate::value::option")]` for `Option<Value>`; `None`
/// serializes as `null`.
pub mod option {
    use super::*;
    use serde::Serialize;

    pub fn serialize<S: Serializer>(v: &Option<Value>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref().map(to_json).serialize(s)
    }
}
