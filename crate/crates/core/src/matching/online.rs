//! Algorithm 1: online maximum-weight matching with vertex locking.

use std::collections::BTreeSet;

use num_traits::Zero;
use serde_json::json;

use super::{max_weight, max_weight_matching, offline_matching, BipartiteInstance};
use crate::error::MatchingError;
use crate::instance::Slot;
use crate::value::{self, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArrivalEvent {
    pub time: Slot,
    pub left: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LockEvent {
    pub time: Slot,
    pub right: usize,
}

/// The arrival and lock streams implied by the graph's node metadata,
/// ordered by time and then by node position.
pub fn event_streams(g: &BipartiteInstance) -> (Vec<ArrivalEvent>, Vec<LockEvent>) {
    let mut arrivals: Vec<ArrivalEvent> =
        g.left.iter().enumerate().map(|(left, n)| ArrivalEvent { time: n.arrival, left }).collect();
    arrivals.sort_by_key(|e| (e.time, e.left));
    let mut locks: Vec<LockEvent> =
        g.right.iter().enumerate().map(|(right, n)| LockEvent { time: n.lock, right }).collect();
    locks.sort_by_key(|e| (e.time, e.right));
    (arrivals, locks)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EventKind {
    Arrival { left: usize },
    /// All right nodes locking at the end of the slot.
    Lock { rights: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    pub clock: Slot,
    pub kind: EventKind,
    pub temp: Vec<(usize, usize)>,
    pub temp_weight: Value,
    pub perm_weight: Value,
    /// Change of `W(A_t, B, L_t)` caused by the event; zero for locks.
    pub delta: Value,
    /// `rho_t(b)` for every right node, by position.
    pub rho: Vec<Value>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunTrace {
    pub left_labels: Vec<String>,
    pub right_labels: Vec<String>,
    pub events: Vec<TraceEvent>,
    /// `nu_b`: weight of the perm edge at each right node, zero if none.
    pub nu: Vec<Value>,
}

impl RunTrace {
    /// One JSON object per event.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            let (kind, nodes) = match &e.kind {
                EventKind::Arrival { left } => ("arrival", vec![self.left_labels[*left].clone()]),
                EventKind::Lock { rights } => ("lock", rights.iter().map(|&r| self.right_labels[r].clone()).collect()),
            };
            let rho: serde_json::Map<String, serde_json::Value> = self
                .right_labels
                .iter()
                .zip(&e.rho)
                .map(|(label, v)| (label.clone(), value::to_json(v)))
                .collect();
            let temp: Vec<serde_json::Value> = e
                .temp
                .iter()
                .map(|&(l, r)| json!([self.left_labels[l], self.right_labels[r]]))
                .collect();
            let rec = json!({
                "clock": e.clock,
                "event": kind,
                "nodes": nodes,
                "temp": temp,
                "temp_weight": value::to_json(&e.temp_weight),
                "perm_weight": value::to_json(&e.perm_weight),
                "delta": value::to_json(&e.delta),
                "rho": rho,
            });
            out.push_str(&rec.to_string());
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OnlineRun {
    pub perm: Vec<(usize, usize)>,
    pub weight: Value,
    pub trace: RunTrace,
}

fn check_streams(
    g: &BipartiteInstance,
    arrivals: &[ArrivalEvent],
    locks: &[LockEvent],
) -> Result<(), MatchingError> {
    let seq = |m: String| Err(MatchingError::Sequencing(m));
    let mut seen = vec![false; g.left.len()];
    let mut prev = 0;
    for e in arrivals {
        let Some(node) = g.left.get(e.left) else { return Err(MatchingError::UnknownNode(format!("left {}", e.left))) };
        if e.time < prev {
            return seq(format!("arrival of {} at {} after time {}", node.label, e.time, prev));
        }
        if node.arrival != e.time {
            return seq(format!("{} arrives at {} but the graph says {}", node.label, e.time, node.arrival));
        }
        if std::mem::replace(&mut seen[e.left], true) {
            return seq(format!("{} arrives twice", node.label));
        }
        prev = e.time;
    }
    let mut seen = vec![false; g.right.len()];
    prev = 0;
    for e in locks {
        let Some(node) = g.right.get(e.right) else {
            return Err(MatchingError::UnknownNode(format!("right {}", e.right)));
        };
        if e.time < prev {
            return seq(format!("lock of {} at {} after time {}", node.label, e.time, prev));
        }
        if node.lock != e.time {
            return seq(format!("{} locks at {} but the graph says {}", node.label, e.time, node.lock));
        }
        if std::mem::replace(&mut seen[e.right], true) {
            return seq(format!("{} locks twice", node.label));
        }
        prev = e.time;
    }
    Ok(())
}

struct MatchState<'g> {
    g: &'g BipartiteInstance,
    perm: Vec<(usize, usize)>,
    perm_weight: Value,
    temp: Vec<(usize, usize)>,
    temp_weight: Value,
    arrived_free: BTreeSet<usize>,
    free_right: BTreeSet<usize>,
    nu: Vec<Value>,
}

impl MatchState<'_> {
    fn recompute(&mut self) {
        let ls: Vec<usize> = self.arrived_free.iter().copied().collect();
        let rs: Vec<usize> = self.free_right.iter().copied().collect();
        let m = max_weight_matching(self.g, &ls, &rs, &[]).expect("no forced edges");
        self.temp = m.edges;
        self.temp_weight = m.weight;
    }

    fn total(&self) -> Value {
        &self.perm_weight + &self.temp_weight
    }

    /// `rho_t(b)` for every right node under the current state.
    fn rho(&self) -> Vec<Value> {
        let ls: Vec<usize> = self.arrived_free.iter().copied().collect();
        (0..self.g.right.len())
            .map(|b| {
                if !self.free_right.contains(&b) {
                    return self.nu[b].clone();
                }
                // Removing an unmatched node leaves the optimum unchanged.
                if !self.temp.iter().any(|&(_, r)| r == b) {
                    return Value::zero();
                }
                let rs: Vec<usize> = self.free_right.iter().copied().filter(|&r| r != b).collect();
                &self.temp_weight - max_weight(self.g, &ls, &rs, &[]).expect("no forced edges")
            })
            .collect()
    }

    fn record(&self, clock: Slot, kind: EventKind, delta: Value) -> TraceEvent {
        TraceEvent {
            clock,
            kind,
            temp: self.temp.clone(),
            temp_weight: self.temp_weight.clone(),
            perm_weight: self.perm_weight.clone(),
            delta,
            rho: self.rho(),
        }
    }
}

/// Runs Algorithm 1. Within a slot, arrivals are handled one at a time in
/// stream order and the slot's locks fire together afterwards, so a left node
/// may still take a right node that locks in its arrival slot.
pub fn run_algorithm1(
    g: &BipartiteInstance,
    arrivals: &[ArrivalEvent],
    locks: &[LockEvent],
) -> Result<OnlineRun, MatchingError> {
    check_streams(g, arrivals, locks)?;
    let mut st = MatchState {
        g,
        perm: Vec::new(),
        perm_weight: Value::zero(),
        temp: Vec::new(),
        temp_weight: Value::zero(),
        arrived_free: BTreeSet::new(),
        free_right: (0..g.right.len()).collect(),
        nu: vec![Value::zero(); g.right.len()],
    };
    let mut events = Vec::new();
    let times: BTreeSet<Slot> = arrivals.iter().map(|e| e.time).chain(locks.iter().map(|e| e.time)).collect();
    let (mut ai, mut li) = (0, 0);
    for t in times {
        while ai < arrivals.len() && arrivals[ai].time == t {
            let a = arrivals[ai].left;
            let before = st.total();
            st.arrived_free.insert(a);
            st.recompute();
            let delta = st.total() - before;
            events.push(st.record(t, EventKind::Arrival { left: a }, delta));
            ai += 1;
        }
        let mut rights = Vec::new();
        while li < locks.len() && locks[li].time == t {
            let b = locks[li].right;
            if let Some(&(a, _)) = st.temp.iter().find(|&&(_, r)| r == b) {
                let w = g.weight(a, b).expect("temp edges exist").clone();
                st.perm.push((a, b));
                st.perm_weight += &w;
                st.nu[b] = w;
                st.arrived_free.remove(&a);
            }
            st.free_right.remove(&b);
            rights.push(b);
            li += 1;
        }
        if !rights.is_empty() {
            st.recompute();
            events.push(st.record(t, EventKind::Lock { rights }, Value::zero()));
        }
    }
    st.perm.sort_unstable();
    Ok(OnlineRun {
        perm: st.perm,
        weight: st.perm_weight,
        trace: RunTrace {
            left_labels: g.left.iter().map(|n| n.label.clone()).collect(),
            right_labels: g.right.iter().map(|n| n.label.clone()).collect(),
            events,
            nu: st.nu,
        },
    })
}

/// `rho_t(b)` at every event of the trace for the right node labelled `b`.
pub fn rho_potential(trace: &RunTrace, b: &str) -> Result<Vec<Value>, MatchingError> {
    let pos = trace.right_labels.iter().position(|l| l == b).ok_or_else(|| MatchingError::UnknownNode(b.into()))?;
    Ok(trace.events.iter().map(|e| e.rho[pos].clone()).collect())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MonotonicityViolation {
    pub right: usize,
    pub event: usize,
    pub before: Value,
    pub after: Value,
}

/// Places where some `rho_t(b)` decreases between consecutive events.
pub fn lemma1_violations(trace: &RunTrace) -> Vec<MonotonicityViolation> {
    let mut out = Vec::new();
    for w in 1..trace.events.len() {
        let (prev, cur) = (&trace.events[w - 1], &trace.events[w]);
        for (right, (before, after)) in prev.rho.iter().zip(&cur.rho).enumerate() {
            if after < before {
                out.push(MonotonicityViolation { right, event: w, before: before.clone(), after: after.clone() });
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InequalityViolation {
    pub left: usize,
    pub right: usize,
    pub delta: Value,
    pub nu: Value,
    pub weight: Value,
}

/// Checks `Delta_a + nu_b >= w_ab` for every left node `a` and its partner
/// `b` in the offline optimum.
pub fn arrival_inequality_violations(g: &BipartiteInstance, trace: &RunTrace) -> Vec<InequalityViolation> {
    let opt = offline_matching(g);
    let mut delta = vec![Value::zero(); g.left.len()];
    for e in &trace.events {
        if let EventKind::Arrival { left } = e.kind {
            delta[left] = e.delta.clone();
        }
    }
    opt.edges
        .iter()
        .filter_map(|&(a, b)| {
            let w = g.weight(a, b).expect("optimum edges exist");
            if &delta[a] + &trace.nu[b] >= *w {
                return None;
            }
            Some(InequalityViolation {
                left: a,
                right: b,
                delta: delta[a].clone(),
                nu: trace.nu[b].clone(),
                weight: w.clone(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::int;

    fn run(g: &BipartiteInstance) -> OnlineRun {
        let (a, l) = event_streams(g);
        run_algorithm1(g, &a, &l).unwrap()
    }

    fn two_lock_scenario() -> BipartiteInstance {
        let mut g = BipartiteInstance::new();
        let a1 = g.add_left("a1", 0);
        let a2 = g.add_left("a2", 2);
        let b1 = g.add_right("b1", 1);
        let b2 = g.add_right("b2", 2);
        g.add_edge(a1, b1, int(5)).unwrap();
        g.add_edge(a1, b2, int(3)).unwrap();
        g.add_edge(a2, b1, int(6)).unwrap();
        g.add_edge(a2, b2, int(6)).unwrap();
        g
    }

    #[test]
    fn single_edge() {
        let mut g = BipartiteInstance::new();
        g.add_left("a", 0);
        g.add_right("b", 1);
        g.add_edge(0, 0, int(4)).unwrap();
        let r = run(&g);
        assert_eq!(r.weight, int(4));
        assert_eq!(r.perm, vec![(0, 0)]);
    }

    #[test]
    fn two_lock_scenario_locks_both() {
        let g = two_lock_scenario();
        let r = run(&g);
        assert_eq!(r.perm, vec![(0, 0), (1, 1)]);
        assert_eq!(r.weight, int(11));
        assert_eq!(offline_matching(&g).weight, int(11));
        // b2 offers a1 an alternative worth 3, so b1 starts at 5 - 3.
        assert_eq!(rho_potential(&r.trace, "b1").unwrap(), vec![int(2), int(5), int(5), int(5)]);
        assert!(lemma1_violations(&r.trace).is_empty());
        assert!(arrival_inequality_violations(&g, &r.trace).is_empty());
    }

    #[test]
    fn unused_node_has_zero_potential() {
        let mut g = two_lock_scenario();
        g.add_right("b3", 3);
        let r = run(&g);
        assert!(rho_potential(&r.trace, "b3").unwrap().iter().all(Zero::is_zero));
        assert_eq!(rho_potential(&r.trace, "zz"), Err(MatchingError::UnknownNode("zz".into())));
    }

    #[test]
    fn node_locked_unmatched_ends_at_zero() {
        let mut g = BipartiteInstance::new();
        g.add_left("a", 2);
        g.add_right("b", 0);
        g.add_right("c", 3);
        g.add_edge(0, 1, int(2)).unwrap();
        let r = run(&g);
        assert_eq!(rho_potential(&r.trace, "b").unwrap().last(), Some(&int(0)));
        assert_eq!(r.weight, int(2));
    }

    #[test]
    fn out_of_order_streams_are_rejected() {
        let g = two_lock_scenario();
        let (mut a, l) = event_streams(&g);
        a.reverse();
        assert!(matches!(run_algorithm1(&g, &a, &l), Err(MatchingError::Sequencing(_))));
        let (a, mut l) = event_streams(&g);
        l[0].time = 5;
        assert!(matches!(run_algorithm1(&g, &a, &l), Err(MatchingError::Sequencing(_))));
    }

    #[test]
    fn trace_lines_are_json() {
        let r = run(&two_lock_scenario());
        let text = r.trace.to_json_lines();
        assert_eq!(text.lines().count(), r.trace.events.len());
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(v["rho"].is_object());
        }
    }
}
