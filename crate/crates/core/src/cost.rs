//! Parametric and tabulated cost/utility functions on the non-negative integers.

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::value::{self, Value};

/// A function `f: {0, 1, 2, ...} -> Q`.
///
/// * `Linear { slope }`: `slope * x`
/// * `Power { coef, exponent }`: `coef * x^exponent`, `exponent >= 1`
/// * `Exponential { scale, base }`: `scale * (base^x - 1)`, `base > 0`.
///   `scale = 1, base = 2^b` gives the Shannon energy `2^{xb} - 1`;
///   `scale = -S, base = 1/2` gives the saturating utility `S (1 - 2^{-x})`.
/// * `Tabulated(values)`: `values[x]`; past the end of the table the last
///   increment is repeated, which keeps convex tables convex and concave
///   tables concave.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawCost", into = "RawCost")]
pub enum CostFamily {
    Linear { slope: Value },
    Power { coef: Value, exponent: u32 },
    Exponential { scale: Value, base: Value },
    Tabulated(Vec<Value>),
}

/// Wire form: `{"kind": ..., "params": [...]}` or `{"kind": "tabulated", "table": [...]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCost {
    kind: CostKind,
    #[serde(default, with = "value::seq", skip_serializing_if = "Vec::is_empty")]
    params: Vec<Value>,
    #[serde(default, with = "value::seq", skip_serializing_if = "Vec::is_empty")]
    table: Vec<Value>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    Linear,
    Power,
    Exponential,
    Tabulated,
}

impl TryFrom<RawCost> for CostFamily {
    type Error = ModelError;

    fn try_from(raw: RawCost) -> Result<Self, ModelError> {
        let bad = |msg: &str| ModelError::Cost(format!("{:?}: {msg}", raw.kind).to_lowercase());
        if raw.kind != CostKind::Tabulated && !raw.table.is_empty() {
            return Err(bad("only tabulated costs take a table"));
        }
        match raw.kind {
            CostKind::Linear => match raw.params.as_slice() {
                [slope] => Ok(CostFamily::Linear { slope: slope.clone() }),
                _ => Err(bad("expects params [slope]")),
            },
            CostKind::Power => match raw.params.as_slice() {
                [coef, exponent] => {
                    if !exponent.is_integer() || exponent < &Value::one() {
                        return Err(bad("exponent must be an integer >= 1"));
                    }
                    let exponent = u32::try_from(exponent.to_integer())
                        .map_err(|_| bad("exponent out of range"))?;
                    Ok(CostFamily::Power { coef: coef.clone(), exponent })
                }
                _ => Err(bad("expects params [coef, exponent]")),
            },
            CostKind::Exponential => match raw.params.as_slice() {
                [scale, base] => {
                    if !base.is_positive() {
                        return Err(bad("base must be positive"));
                    }
                    Ok(CostFamily::Exponential { scale: scale.clone(), base: base.clone() })
                }
                _ => Err(bad("expects params [scale, base]")),
            },
            CostKind::Tabulated => {
                if !raw.params.is_empty() {
                    return Err(bad("takes a table, not params"));
                }
                if raw.table.is_empty() {
                    return Err(bad("table must not be empty"));
                }
                Ok(CostFamily::Tabulated(raw.table))
            }
        }
    }
}

impl From<CostFamily> for RawCost {
    fn from(c: CostFamily) -> RawCost {
        let (kind, params, table) = match c {
            CostFamily::Linear { slope } => (CostKind::Linear, vec![slope], vec![]),
            CostFamily::Power { coef, exponent } => {
                (CostKind::Power, vec![coef, value::int(exponent.into())], vec![])
            }
            CostFamily::Exponential { scale, base } => {
                (CostKind::Exponential, vec![scale, base], vec![])
            }
            CostFamily::Tabulated(t) => (CostKind::Tabulated, vec![], t),
        };
        RawCost { kind, params, table }
    }
}

/// Which structural assumption a function is checked against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    /// Utility: `f(0) = 0`, non-decreasing, non-increasing increments.
    Concave,
    /// Delay/energy cost: `f(0) = 0`, non-decreasing, non-decreasing increments.
    Convex,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ShapeViolation {
    NonZeroAtOrigin(Value),
    Decreasing { at: u64 },
    IncrementsIncrease { at: u64 },
    IncrementsDecrease { at: u64 },
}

impl std::fmt::Display for ShapeViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ShapeViolation::NonZeroAtOrigin(v) => write!(f, "value at 0 is {} (must be 0)", value::format(v)),
            ShapeViolation::Decreasing { at } => write!(f, "decreases at i={at}"),
            ShapeViolation::IncrementsIncrease { at } => write!(f, "increments increase at i={at}"),
            ShapeViolation::IncrementsDecrease { at } => write!(f, "increments decrease at i={at}"),
        }
    }
}

impl CostFamily {
    pub fn linear(slope: Value) -> Self {
        CostFamily::Linear { slope }
    }

    pub fn zero() -> Self {
        CostFamily::Linear { slope: Value::zero() }
    }

    pub fn table(values: &[i64]) -> Self {
        CostFamily::Tabulated(values.iter().map(|&v| value::int(v)).collect())
    }

    pub fn kind(&self) -> CostKind {
        match self {
            CostFamily::Linear { .. } => CostKind::Linear,
            CostFamily::Power { .. } => CostKind::Power,
            CostFamily::Exponential { .. } => CostKind::Exponential,
            CostFamily::Tabulated(_) => CostKind::Tabulated,
        }
    }

    pub fn eval(&self, x: u64) -> Value {
        match self {
            CostFamily::Linear { slope } => slope * value::int(x as i64),
            CostFamily::Power { coef, exponent } => {
                coef * value::pow(&value::int(x as i64), u64::from(*exponent))
            }
            CostFamily::Exponential { scale, base } => scale * (value::pow(base, x) - Value::one()),
            CostFamily::Tabulated(t) => {
                let n = t.len() as u64;
                if x < n {
                    t[x as usize].clone()
                } else {
                    let last = &t[t.len() - 1];
                    let step = if t.len() >= 2 { last - &t[t.len() - 2] } else { Value::zero() };
                    last + step * value::int((x - n + 1) as i64)
                }
            }
        }
    }

    /// `f(x + 1) - f(x)`.
    pub fn delta(&self, x: u64) -> Value {
        self.eval(x + 1) - self.eval(x)
    }

    /// Checks the shape on `0..=upto` and returns every violation found.
    pub fn check_shape(&self, shape: Shape, upto: u64) -> Vec<ShapeViolation> {
        let mut out = Vec::new();
        let vals: Vec<Value> = (0..=upto).map(|x| self.eval(x)).collect();
        if !vals[0].is_zero() {
            out.push(ShapeViolation::NonZeroAtOrigin(vals[0].clone()));
        }
        for i in 1..vals.len() {
            if vals[i] < vals[i - 1] {
                out.push(ShapeViolation::Decreasing { at: i as u64 });
            }
            if i >= 2 {
                let prev = &vals[i - 1] - &vals[i - 2];
                let cur = &vals[i] - &vals[i - 1];
                match shape {
                    Shape::Concave if cur > prev => {
                        out.push(ShapeViolation::IncrementsIncrease { at: i as u64 })
                    }
                    Shape::Convex if cur < prev => {
                        out.push(ShapeViolation::IncrementsDecrease { at: i as u64 })
                    }
                    _ => {}
                }
            }
        }
        out
    }

    pub fn is_convex_cost(&self, upto: u64) -> bool {
        self.check_shape(Shape::Convex, upto).is_empty()
    }
}
