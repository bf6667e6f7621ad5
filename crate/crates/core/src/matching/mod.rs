//! Maximum-weight bipartite matching with vertex locking.
//!
//! Left nodes arrive over time, right nodes lock at fixed slots. The online
//! matcher keeps a tentative maximum-weight matching of the unlocked nodes and
//! commits whatever is matched to a right node when that node locks.

mod binary;
mod hungarian;
mod online;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::MatchingError;
use crate::instance::Slot;
use crate::value::{self, Value};

pub use binary::{expand_binary, expand_binary_full, BinaryExpansion, MiniSlot};
pub use online::{
    arrival_inequality_violations, event_streams, lemma1_violations, rho_potential, run_algorithm1, ArrivalEvent,
    EventKind, InequalityViolation, LockEvent, MonotonicityViolation, OnlineRun, RunTrace, TraceEvent,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeftNode {
    pub label: String,
    pub arrival: Slot,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RightNode {
    pub label: String,
    pub lock: Slot,
}

/// Nodes are referred to by their position in `left` / `right`; positions
/// are also the tie-break order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct BipartiteInstance {
    pub left: Vec<LeftNode>,
    pub right: Vec<RightNode>,
    edges: BTreeMap<(usize, usize), Value>,
}

#[derive(Serialize, Deserialize)]
struct RawEdge {
    left: usize,
    right: usize,
    #[serde(with = "value")]
    weight: Value,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    left: Vec<LeftNode>,
    right: Vec<RightNode>,
    edges: Vec<RawEdge>,
}

impl TryFrom<RawGraph> for BipartiteInstance {
    type Error = MatchingError;
    fn try_from(raw: RawGraph) -> Result<Self, MatchingError> {
        let mut g = BipartiteInstance { left: raw.left, right: raw.right, edges: BTreeMap::new() };
        for e in raw.edges {
            g.add_edge(e.left, e.right, e.weight)?;
        }
        Ok(g)
    }
}

impl From<BipartiteInstance> for RawGraph {
    fn from(g: BipartiteInstance) -> RawGraph {
        RawGraph {
            left: g.left,
            right: g.right,
            edges: g.edges.into_iter().map(|((l, r), weight)| RawEdge { left: l, right: r, weight }).collect(),
        }
    }
}

/// A matching as (left, right) position pairs, sorted, with its weight.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Matching {
    pub edges: Vec<(usize, usize)>,
    pub weight: Value,
}

impl BipartiteInstance {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_left(&mut self, label: impl Into<String>, arrival: Slot) -> usize {
        self.left.push(LeftNode { label: label.into(), arrival });
        self.left.len() - 1
    }

    pub fn add_right(&mut self, label: impl Into<String>, lock: Slot) -> usize {
        self.right.push(RightNode { label: label.into(), lock });
        self.right.len() - 1
    }

    pub fn add_edge(&mut self, l: usize, r: usize, w: Value) -> Result<(), MatchingError> {
        if l >= self.left.len() {
            return Err(MatchingError::UnknownNode(format!("left {l}")));
        }
        if r >= self.right.len() {
            return Err(MatchingError::UnknownNode(format!("right {r}")));
        }
        if !value::is_non_negative(&w) {
            return Err(MatchingError::NegativeWeight(l, r));
        }
        self.edges.insert((l, r), w);
        Ok(())
    }

    pub fn weight(&self, l: usize, r: usize) -> Option<&Value> {
        self.edges.get(&(l, r))
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, &Value)> {
        self.edges.iter().map(|(&(l, r), w)| (l, r, w))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Whether `l` can still be matched to `r` when it arrives.
    pub fn is_causal(&self, l: usize, r: usize) -> bool {
        self.left[l].arrival <= self.right[r].lock
    }

    pub fn matching_weight(&self, edges: &[(usize, usize)]) -> Value {
        edges.iter().filter_map(|&(l, r)| self.weight(l, r)).fold(value::zero(), |acc, w| acc + w)
    }

    pub fn from_json(text: &str) -> Result<Self, crate::error::ModelError> {
        serde_json::from_str(text).map_err(crate::error::ModelError::from_json)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&serde_json::to_value(self).expect("graph serializes"))
            .expect("prints");
        s.push('\n');
        s
    }
}

fn check_forced(g: &BipartiteInstance, forced: &[(usize, usize)]) -> Result<(), MatchingError> {
    let mut ls = HashSet::new();
    let mut rs = HashSet::new();
    for &(l, r) in forced {
        if g.weight(l, r).is_none() {
            return Err(MatchingError::ForcedMissing(l, r));
        }
        if !ls.insert(l) {
            return Err(MatchingError::ForcedConflict(format!("left {l}")));
        }
        if !rs.insert(r) {
            return Err(MatchingError::ForcedConflict(format!("right {r}")));
        }
    }
    Ok(())
}

fn solve_restricted(
    g: &BipartiteInstance,
    lefts: &[usize],
    rights: &[usize],
    forced: &[(usize, usize)],
    canonical: bool,
    causal_only: bool,
) -> Result<Matching, MatchingError> {
    check_forced(g, forced)?;
    let fl: HashSet<usize> = forced.iter().map(|e| e.0).collect();
    let fr: HashSet<usize> = forced.iter().map(|e| e.1).collect();
    let mut ls: Vec<usize> = lefts.iter().copied().filter(|l| !fl.contains(l)).collect();
    let mut rs: Vec<usize> = rights.iter().copied().filter(|r| !fr.contains(r)).collect();
    ls.sort_unstable();
    ls.dedup();
    rs.sort_unstable();
    rs.dedup();
    let (free, w) = hungarian::solve(
        ls.len(),
        rs.len(),
        |i, j| {
            let (l, r) = (ls[i], rs[j]);
            if causal_only && !g.is_causal(l, r) {
                return None;
            }
            g.weight(l, r)
        },
        canonical,
    );
    let mut edges: Vec<(usize, usize)> = forced.to_vec();
    edges.extend(free.into_iter().map(|(i, j)| (ls[i], rs[j])));
    edges.sort_unstable();
    let weight = w + g.matching_weight(forced);
    Ok(Matching { edges, weight })
}

/// Maximum-weight matching of `lefts` to `rights` that contains every edge of
/// `forced`. Among optima the result is canonical: earlier left nodes get the
/// lowest right node they can have, and being unmatched ranks last.
pub fn max_weight_matching(
    g: &BipartiteInstance,
    lefts: &[usize],
    rights: &[usize],
    forced: &[(usize, usize)],
) -> Result<Matching, MatchingError> {
    solve_restricted(g, lefts, rights, forced, true, false)
}

/// Weight of [`max_weight_matching`] without the tie-break bookkeeping.
pub fn max_weight(
    g: &BipartiteInstance,
    lefts: &[usize],
    rights: &[usize],
    forced: &[(usize, usize)],
) -> Result<Value, MatchingError> {
    Ok(solve_restricted(g, lefts, rights, forced, false, false)?.weight)
}

/// Offline optimum over the whole graph: every node present, no locking, but
/// only edges a left node could actually use (`T_a <= T_b`).
pub fn offline_matching(g: &BipartiteInstance) -> Matching {
    let lefts: Vec<usize> = (0..g.left.len()).collect();
    let rights: Vec<usize> = (0..g.right.len()).collect();
    solve_restricted(g, &lefts, &rights, &[], true, true).expect("no forced edges")
}
