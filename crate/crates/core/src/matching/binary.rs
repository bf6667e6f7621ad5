//! The mini-slot graph of a binary instance: packet `p` matched to `b_(t,s,i)`
//! means `p` is the `i`-th packet served by server `s` in slot `t`.

use super::{event_streams, offline_matching, ArrivalEvent, BipartiteInstance, LockEvent, Matching};
use crate::error::MatchingError;
use crate::instance::{unit, Allocation, BinId, Instance, Slot};
use crate::valuation::binary_edge_weight_on;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MiniSlot {
    pub slot: Slot,
    pub server: u32,
    pub position: u32,
}

#[derive(Clone, Debug)]
pub struct BinaryExpansion {
    pub graph: BipartiteInstance,
    /// Packet id of each left node.
    pub packets: Vec<u32>,
    pub minislots: Vec<MiniSlot>,
    pub arrivals: Vec<ArrivalEvent>,
    pub locks: Vec<LockEvent>,
}

impl BinaryExpansion {
    /// The allocation a matching encodes; unmatched packets are discarded.
    pub fn allocation(&self, edges: &[(usize, usize)]) -> Allocation {
        let mut alloc = Allocation::new();
        for (l, &id) in self.packets.iter().enumerate() {
            let bin = edges.iter().find(|e| e.0 == l).map_or(BinId::Discard, |&(_, r)| {
                let m = self.minislots[r];
                BinId::Slot { slot: m.slot, server: m.server }
            });
            alloc.insert(unit(id), bin).expect("one entry per packet");
        }
        alloc
    }

    /// The offline optimum over causal edges, as a matching.
    pub fn offline_opt(&self) -> Matching {
        offline_matching(&self.graph)
    }
}

/// Slot `t` gets as many mini-slots per server as packets have arrived by
/// `t`; no slot can serve more.
pub fn expand_binary(inst: &Instance) -> Result<BinaryExpansion, MatchingError> {
    expand(inst, |t| inst.packets.iter().filter(|p| p.arrival <= t).count() as u32)
}

/// Like [`expand_binary`] but with `n` mini-slots in every slot; used by the
/// offline oracle.
pub fn expand_binary_full(inst: &Instance) -> Result<BinaryExpansion, MatchingError> {
    let n = inst.packets.len() as u32;
    expand(inst, |_| n)
}

fn expand(inst: &Instance, k: impl Fn(Slot) -> u32) -> Result<BinaryExpansion, MatchingError> {
    if let Some(p) = inst.packets.iter().find(|p| p.subpackets != 1) {
        return Err(MatchingError::NotBinary(p.id, p.subpackets));
    }
    let mut order: Vec<usize> = (0..inst.packets.len()).collect();
    order.sort_by_key(|&i| (inst.packets[i].arrival, inst.packets[i].id));
    let mut g = BipartiteInstance::new();
    let mut packets = Vec::new();
    for &i in &order {
        let p = &inst.packets[i];
        g.add_left(format!("p{}", p.id), p.arrival);
        packets.push(p.id);
    }
    let mut minislots = Vec::new();
    for slot in 0..=inst.horizon {
        for server in 0..inst.servers {
            for position in 1..=k(slot) {
                let label =
                    if inst.servers == 1 { format!("b{slot}.{position}") } else { format!("b{slot}.{server}.{position}") };
                g.add_right(label, slot);
                minislots.push(MiniSlot { slot, server, position });
            }
        }
    }
    for (l, &i) in order.iter().enumerate() {
        let p = &inst.packets[i];
        for (r, m) in minislots.iter().enumerate() {
            if m.slot < p.arrival {
                continue;
            }
            let w = binary_edge_weight_on(inst, p, m.slot, m.server, m.position)?;
            if crate::value::is_non_negative(&w) {
                g.add_edge(l, r, w)?;
            }
        }
    }
    let (arrivals, locks) = event_streams(&g);
    Ok(BinaryExpansion { graph: g, packets, minislots, arrivals, locks })
}
