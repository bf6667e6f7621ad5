//! Offline optima used as denominators: branch-and-bound over allocations
//! for general instances, and a single offline matching for binary ones.

use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::error::{MatchingError, OracleError};
use crate::greedy::run_algorithm2;
use crate::instance::{Allocation, BinId, Instance, SubpacketRef};
use crate::matching::{expand_binary_full, Matching};
use crate::valuation::{evaluate_z, LoadState, Valuation};
use crate::value::{self, Value};

mod frozen;

pub use frozen::max_y_bruteforce;

pub const DEFAULT_BUDGET: u64 = 10_000_000;

/// The search budget: `AQI_BUDGET` when set to a number, else the default.
pub fn budget_from_env() -> u64 {
    std::env::var("AQI_BUDGET").ok().and_then(|v| v.trim().parse().ok()).unwrap_or(DEFAULT_BUDGET)
}

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub allocation: Allocation,
    pub valuation: Valuation,
    /// Search nodes visited.
    pub nodes: u64,
}

/// Whether every energy function has non-decreasing increments up to `n`.
pub(crate) fn energies_convex(inst: &Instance, n: u32) -> bool {
    inst.energy.iter().all(|g| (0..n).all(|i| g.delta(i.into()) <= g.delta(u64::from(i) + 1)))
}

/// Every non-decreasing sequence of `k` bins drawn from `bins`, in
/// lexicographic order.
pub(crate) fn sequences(bins: &[BinId], k: u32) -> Vec<Vec<BinId>> {
    fn rec(bins: &[BinId], from: usize, k: u32, cur: &mut Vec<BinId>, out: &mut Vec<Vec<BinId>>) {
        if k == 0 {
            out.push(cur.clone());
            return;
        }
        for i in from..bins.len() {
            cur.push(bins[i]);
            rec(bins, i, k - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(bins, 0, k, &mut Vec::new(), &mut out);
    out
}

pub(crate) struct Counter {
    pub(crate) nodes: u64,
    pub(crate) budget: u64,
}

impl Counter {
    pub(crate) fn tick(&mut self) -> Result<(), OracleError> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(OracleError::BudgetExceeded { budget: self.budget });
        }
        Ok(())
    }
}

/// Keeps the best solution seen, starting from a known lower bound. Until a
/// solution is recorded, reaching the bound counts as success so the first
/// (lexicographically smallest) optimum is kept.
struct Best<T> {
    value: Value,
    found: Option<T>,
    /// Require a strict improvement even before anything is found.
    strict: bool,
}

impl<T> Best<T> {
    fn beaten_by(&self, v: &Value) -> bool {
        if self.strict || self.found.is_some() {
            *v > self.value
        } else {
            *v >= self.value
        }
    }

    fn offer(&mut self, v: Value, sol: impl FnOnce() -> T) {
        if self.beaten_by(&v) {
            self.value = v;
            self.found = Some(sol());
        }
    }
}

struct ZSearch<'a> {
    inst: &'a Instance,
    order: Vec<usize>,
    options: Vec<Vec<Vec<BinId>>>,
    /// `rest[i]`: upper bound on what packets `order[i..]` can still add.
    rest: Option<Vec<Value>>,
    counter: Counter,
    best: Best<Vec<usize>>,
}

impl ZSearch<'_> {
    fn dfs(&mut self, i: usize, st: &LoadState<'_>, cur: &Value, chosen: &mut Vec<usize>) -> Result<(), OracleError> {
        if i == self.order.len() {
            self.best.offer(cur.clone(), || chosen.clone());
            return Ok(());
        }
        if let Some(rest) = &self.rest {
            if !self.best.beaten_by(&(cur + &rest[i])) {
                return Ok(());
            }
        }
        let pos = self.order[i];
        for o in 0..self.options[i].len() {
            self.counter.tick()?;
            let mut next = st.clone();
            let mut v = cur.clone();
            for &b in &self.options[i][o] {
                v += next.rho(pos, b);
                next.apply(pos, b);
            }
            chosen.push(o);
            self.dfs(i + 1, &next, &v, chosen)?;
            chosen.pop();
        }
        Ok(())
    }
}

/// A `Z`-maximizing allocation. Every sub-packet goes to a slot at or after
/// its arrival or to discard, sub-packets of a packet in index order. Among
/// optima the lexicographically smallest (bins listed in arrival order) is
/// returned. Fails rather than approximates once `budget` search nodes have
/// been visited.
pub fn offline_opt_bruteforce(inst: &Instance, budget: u64) -> Result<OracleResult, OracleError> {
    let mut order: Vec<usize> = (0..inst.packets.len()).collect();
    order.sort_by_key(|&i| (inst.packets[i].arrival, inst.packets[i].id));
    let options: Vec<Vec<Vec<BinId>>> = order
        .iter()
        .map(|&i| {
            let p = &inst.packets[i];
            let bins: Vec<BinId> = inst.regular_bins().filter(|b| b.open_at(p.arrival)).chain([BinId::Discard]).collect();
            sequences(&bins, p.subpackets)
        })
        .collect();
    // With convex energies, a packet placed alone on empty bins gains at
    // least as much as it can add to any partial allocation.
    let rest = energies_convex(inst, inst.total_subpackets()).then(|| {
        let empty = LoadState::new(inst);
        let alone: Vec<Value> = order
            .iter()
            .zip(&options)
            .map(|(&pos, opts)| {
                opts.iter()
                    .map(|seq| {
                        let mut st = empty.clone();
                        let mut v = Value::zero();
                        for &b in seq {
                            v += st.rho(pos, b);
                            st.apply(pos, b);
                        }
                        v
                    })
                    .max()
                    .unwrap_or_else(Value::zero)
                    .max(Value::zero())
            })
            .collect();
        let mut rest = vec![Value::zero(); alone.len() + 1];
        for i in (0..alone.len()).rev() {
            rest[i] = &rest[i + 1] + &alone[i];
        }
        rest
    });
    let floor = run_algorithm2(inst).valuation.total;
    let mut search = ZSearch {
        inst,
        order,
        options,
        rest,
        counter: Counter { nodes: 0, budget },
        best: Best { value: floor, found: None, strict: false },
    };
    search.dfs(0, &LoadState::new(inst), &Value::zero(), &mut Vec::new())?;
    let chosen = search.best.found.take().expect("greedy value is attainable");
    let mut allocation = Allocation::new();
    for (i, &o) in chosen.iter().enumerate() {
        let p = &search.inst.packets[search.order[i]];
        for (j, &b) in search.options[i][o].iter().enumerate() {
            allocation.insert(SubpacketRef { packet: p.id, index: j as u32 + 1 }, b).expect("fresh");
        }
    }
    let valuation = evaluate_z(inst, &allocation).expect("search uses known bins");
    Ok(OracleResult { allocation, valuation, nodes: search.counter.nodes })
}

#[derive(Clone, Debug)]
pub struct BinaryOpt {
    pub matching: Matching,
    pub allocation: Allocation,
}

/// Offline optimum of a binary instance as one maximum-weight matching on the
/// fully expanded mini-slot graph.
pub fn offline_opt_binary_matching(inst: &Instance) -> Result<BinaryOpt, MatchingError> {
    let e = expand_binary_full(inst)?;
    let matching = e.offline_opt();
    let allocation = e.allocation(&matching.edges);
    Ok(BinaryOpt { matching, allocation })
}

#[derive(Clone, Debug)]
pub struct YOptResult {
    pub allocation: Allocation,
    pub value: Value,
    pub nodes: u64,
}

/// Outcome of comparing an online value to the offline optimum.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RatioReport {
    Ratio {
        #[serde(with = "value")]
        ratio: Value,
        /// Set when the ratio is below one half.
        theorem_violation: bool,
    },
    /// `OPT = 0`; the ratio is not defined.
    Undefined {
        #[serde(with = "value")]
        alg: Value,
    },
    /// `OPT < 0` cannot happen for a correct oracle since discarding
    /// everything is worth 0.
    Degenerate {
        #[serde(with = "value")]
        opt: Value,
    },
}

impl RatioReport {
    pub fn is_violation(&self) -> bool {
        matches!(self, RatioReport::Ratio { theorem_violation: true, .. })
    }

    pub fn ratio(&self) -> Option<&Value> {
        match self {
            RatioReport::Ratio { ratio, .. } => Some(ratio),
            _ => None,
        }
    }

    /// `alg/opt` as a decimal, or a short word when undefined.
    pub fn display(&self) -> String {
        match self {
            RatioReport::Ratio { ratio, .. } => format!("{:.6}", value::to_f64(ratio)),
            RatioReport::Undefined { .. } => "undefined".into(),
            RatioReport::Degenerate { .. } => "degenerate".into(),
        }
    }
}

pub fn competitive_ratio(alg: &Value, opt: &Value) -> RatioReport {
    if opt.is_zero() {
        return RatioReport::Undefined { alg: alg.clone() };
    }
    if opt.is_negative() {
        return RatioReport::Degenerate { opt: opt.clone() };
    }
    let ratio = alg / opt;
    let theorem_violation = ratio < value::ratio(1, 2);
    RatioReport::Ratio { ratio, theorem_violation }
}
