//! Reference computations written from the definitions, independent of the
//! library's own evaluation code.

#![allow(dead_code)]

use std::collections::BTreeMap;

use aqi_core::matching::BipartiteInstance;
use aqi_core::{Allocation, BinId, Instance, SubpacketRef, Value};
use num_traits::Zero;

/// `Z(S)` straight from the objective.
pub fn z_reference(inst: &Instance, alloc: &Allocation) -> Value {
    let mut z = Value::zero();
    let mut loads: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    for p in &inst.packets {
        let mut n = 0u64;
        let mut last = p.arrival;
        for j in 1..=p.subpackets {
            if let Some(BinId::Slot { slot, server }) = alloc.get(&SubpacketRef { packet: p.id, index: j }) {
                n += 1;
                last = last.max(slot);
                *loads.entry((slot, server)).or_default() += 1;
            }
        }
        if n == 0 || p.deadline.is_some_and(|c| last > c) {
            continue;
        }
        z += &p.weight * (p.distortion.eval(n) - p.delay_cost.eval(u64::from(last - p.arrival)));
    }
    for ((_, s), k) in loads {
        z -= inst.energy[s as usize].eval(k);
    }
    z
}

/// Best `Z` over every allocation that sends each sub-packet no earlier than
/// its arrival and keeps a packet's sub-packets in slot order.
pub fn enumerate_opt(inst: &Instance) -> Value {
    let res = inst.resources();
    let bins: Vec<BinId> = inst.regular_bins().chain([BinId::Discard]).collect();
    let mut best = Value::zero();
    let mut choice = vec![0usize; res.len()];
    loop {
        let mut a = Allocation::new();
        let mut ok = true;
        let mut floor: BTreeMap<u32, u32> = BTreeMap::new();
        for (r, &c) in res.iter().zip(&choice) {
            let b = bins[c];
            if let BinId::Slot { slot, .. } = b {
                let lo = floor.get(&r.r.packet).copied().unwrap_or(0).max(r.arrival);
                if slot < lo {
                    ok = false;
                    break;
                }
                floor.insert(r.r.packet, slot);
            }
            a.insert(r.r, b).unwrap();
        }
        if ok {
            let z = z_reference(inst, &a);
            if z > best {
                best = z;
            }
        }
        let mut i = 0;
        loop {
            if i == res.len() {
                return best;
            }
            choice[i] += 1;
            if choice[i] < bins.len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// Heaviest matching using only edges whose left node arrives no later than
/// the right node locks.
pub fn causal_matching_bruteforce(g: &BipartiteInstance) -> Value {
    fn go(g: &BipartiteInstance, l: usize, used: &mut Vec<bool>) -> Value {
        if l == g.left.len() {
            return Value::zero();
        }
        let mut best = go(g, l + 1, used);
        for r in 0..g.right.len() {
            if used[r] || g.left[l].arrival > g.right[r].lock {
                continue;
            }
            if let Some(w) = g.weight(l, r).cloned() {
                used[r] = true;
                let v = w + go(g, l + 1, used);
                used[r] = false;
                if v > best {
                    best = v;
                }
            }
        }
        best
    }
    go(g, 0, &mut vec![false; g.right.len()])
}
