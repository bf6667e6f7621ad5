//! Exact maximum-weight bipartite matching via the Hungarian method with
//! potentials, over any ordered additive cost type.

use std::ops::{Add, Sub};

use num_bigint::BigInt;
use num_traits::Zero;

use crate::value::Value;

/// Costs the potentials method can run on: a totally ordered abelian group.
pub(crate) trait Cost: Clone + Ord + Add<Output = Self> + Sub<Output = Self> {
    fn nil() -> Self;
}

impl Cost for Value {
    fn nil() -> Self {
        <Value as Zero>::zero()
    }
}

/// Weight compared first, then a secondary key that encodes the preferred
/// assignment among equal-weight optima.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) struct LexCost {
    primary: Value,
    secondary: BigInt,
}

impl Add for LexCost {
    type Output = LexCost;
    fn add(self, o: LexCost) -> LexCost {
        LexCost { primary: self.primary + o.primary, secondary: self.secondary + o.secondary }
    }
}

impl Sub for LexCost {
    type Output = LexCost;
    fn sub(self, o: LexCost) -> LexCost {
        LexCost { primary: self.primary - o.primary, secondary: self.secondary - o.secondary }
    }
}

impl Cost for LexCost {
    fn nil() -> Self {
        LexCost { primary: Value::zero(), secondary: BigInt::zero() }
    }
}

/// Min-cost assignment of every row to a distinct column (`rows <= cols`).
/// Returns the column of each row.
fn assign<C: Cost>(cost: &[Vec<C>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    debug_assert!(n <= m);
    // 1-based rows/columns; column 0 is the virtual source.
    let mut u = vec![C::nil(); n + 1];
    let mut v = vec![C::nil(); m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv: Vec<Option<C>> = vec![None; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta: Option<C> = None;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1].clone() - u[i0].clone() - v[j].clone();
                if minv[j].as_ref().is_none_or(|mv| cur < *mv) {
                    minv[j] = Some(cur);
                    way[j] = j0;
                }
                let mj = minv[j].as_ref().expect("just set");
                if delta.as_ref().is_none_or(|d| mj < d) {
                    delta = Some(mj.clone());
                    j1 = j;
                }
            }
            let delta = delta.expect("rows <= cols leaves a free column");
            for j in 0..=m {
                if used[j] {
                    let r = p[j];
                    u[r] = u[r].clone() + delta.clone();
                    v[j] = v[j].clone() - delta.clone();
                } else if let Some(mv) = minv[j].take() {
                    minv[j] = Some(mv - delta.clone());
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![usize::MAX; n];
    for j in 1..=m {
        if p[j] != 0 {
            col_of[p[j] - 1] = j - 1;
        }
    }
    col_of
}

/// Maximum-weight matching between `rows` and `cols` where `weight(i, j)`
/// gives the non-negative weight of an edge or `None` when absent. Row `i`
/// may stay unmatched.
///
/// With `canonical`, ties among maximum-weight matchings are broken so that
/// the first row gets the lowest-indexed column it can have in some optimum,
/// then the second row, and so on; staying unmatched ranks after every
/// column.
pub(crate) fn solve<'w>(
    rows: usize,
    cols: usize,
    weight: impl Fn(usize, usize) -> Option<&'w Value>,
    canonical: bool,
) -> (Vec<(usize, usize)>, Value) {
    if rows == 0 || cols == 0 {
        return (Vec::new(), Value::zero());
    }
    let width = cols + rows;
    let col_of = if canonical {
        let base = BigInt::from(cols + 1);
        let mut place = vec![BigInt::from(1); rows];
        for i in (0..rows.saturating_sub(1)).rev() {
            place[i] = &place[i + 1] * &base;
        }
        let cost: Vec<Vec<LexCost>> = (0..rows)
            .map(|i| {
                (0..width)
                    .map(|j| {
                        let unmatched = LexCost { primary: Value::zero(), secondary: &place[i] * cols };
                        if j >= cols {
                            return unmatched;
                        }
                        match weight(i, j) {
                            Some(w) => LexCost { primary: -w.clone(), secondary: &place[i] * j },
                            None => unmatched,
                        }
                    })
                    .collect()
            })
            .collect();
        assign(&cost)
    } else {
        let cost: Vec<Vec<Value>> = (0..rows)
            .map(|i| {
                (0..width)
                    .map(|j| if j < cols { weight(i, j).map(|w| -w.clone()).unwrap_or_else(Value::zero) } else { Value::zero() })
                    .collect()
            })
            .collect();
        assign(&cost)
    };
    let mut edges = Vec::new();
    let mut total = Value::zero();
    for (i, &j) in col_of.iter().enumerate() {
        if j < cols {
            if let Some(w) = weight(i, j) {
                total += w;
                edges.push((i, j));
            }
        }
    }
    (edges, total)
}
