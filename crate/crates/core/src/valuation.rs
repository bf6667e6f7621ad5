//! The allocation valuation `Z(S)` and its increments.
//!
//! ```text
//! Z(S) = sum_p w_p D_p(|S_p|) - sum_p w_p C_p(d_p - A_p) - sum_(t,s) g_s(|S_(t,s)|)
//! ```
//!
//! `d_p` is the last slot holding a sub-packet of `p`. Packets with nothing
//! sent, or whose last sub-packet misses the deadline, contribute nothing to
//! the first two sums. Discarded sub-packets count nowhere.

use std::collections::BTreeMap;

use num_traits::Zero;
use serde::Serialize;

use crate::error::{AllocationError, MatchingError};
use crate::instance::{Allocation, BinId, Instance, Packet, Slot, SubpacketRef};
use crate::value::{self, Value};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PacketTerms {
    pub sent: u32,
    pub last_slot: Option<Slot>,
    #[serde(with = "value")]
    pub utility: Value,
    #[serde(with = "value")]
    pub delay: Value,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Valuation {
    #[serde(with = "value")]
    pub total: Value,
    pub per_packet: BTreeMap<u32, PacketTerms>,
    /// Energy per (slot, server) for every bin holding at least one sub-packet.
    #[serde(serialize_with = "serialize_slots")]
    pub per_slot: BTreeMap<(Slot, u32), Value>,
}

fn serialize_slots<S: serde::Serializer>(m: &BTreeMap<(Slot, u32), Value>, s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut map = s.serialize_map(Some(m.len()))?;
    for ((slot, server), v) in m {
        map.serialize_entry(&BinId::Slot { slot: *slot, server: *server }.to_string(), &value::to_json(v))?;
    }
    map.end()
}

impl Valuation {
    /// Recomputes the total from the parts.
    pub fn recomputed_total(&self) -> Value {
        let mut t = Value::zero();
        for terms in self.per_packet.values() {
            t += &terms.utility;
            t -= &terms.delay;
        }
        for e in self.per_slot.values() {
            t -= e;
        }
        t
    }
}

/// Per-packet counts and per-bin loads of a partial allocation, for O(1)
/// increment evaluation.
#[derive(Clone, Debug)]
pub struct LoadState<'a> {
    inst: &'a Instance,
    sent: Vec<u32>,
    last: Vec<Option<Slot>>,
    loads: Vec<u32>,
}

impl<'a> LoadState<'a> {
    pub fn new(inst: &'a Instance) -> Self {
        let nbins = (inst.horizon as usize + 1) * inst.servers as usize;
        LoadState {
            inst,
            sent: vec![0; inst.packets.len()],
            last: vec![None; inst.packets.len()],
            loads: vec![0; nbins],
        }
    }

    pub fn from_allocation(inst: &'a Instance, alloc: &Allocation) -> Result<Self, AllocationError> {
        alloc.check_references(inst)?;
        let mut st = LoadState::new(inst);
        for (r, b) in alloc.iter() {
            st.apply(inst.packet_index(r.packet).expect("checked"), b);
        }
        Ok(st)
    }

    pub fn instance(&self) -> &'a Instance {
        self.inst
    }

    fn bin_pos(&self, slot: Slot, server: u32) -> usize {
        slot as usize * self.inst.servers as usize + server as usize
    }

    pub fn load(&self, b: BinId) -> u32 {
        match b {
            BinId::Slot { slot, server } => self.loads[self.bin_pos(slot, server)],
            BinId::Discard => 0,
        }
    }

    pub fn sent(&self, packet_pos: usize) -> u32 {
        self.sent[packet_pos]
    }

    /// `d_p^S`, taken as the arrival slot while nothing has been sent.
    pub fn last_slot(&self, packet_pos: usize) -> Slot {
        let p = &self.inst.packets[packet_pos];
        self.last[packet_pos].map_or(p.arrival, |d| d.max(p.arrival))
    }

    /// `rho(r, b | S)` for a sub-packet of the packet at `packet_pos`:
    ///
    /// `dD_p(|S_p|) - dg(|S_b|) - [C_p(max(d_p, t) - A_p) - C_p(d_p - A_p)]`
    ///
    /// (weighted, with the deadline rule applied to the packet term), and 0
    /// for the discard bin.
    pub fn rho(&self, packet_pos: usize, b: BinId) -> Value {
        let BinId::Slot { slot, server } = b else { return Value::zero() };
        let p = &self.inst.packets[packet_pos];
        let n = self.sent[packet_pos];
        let d = self.last_slot(packet_pos);
        let after = p.term(n + 1, d.max(slot));
        let before = p.term(n, d);
        after - before - self.inst.energy_delta(server, self.loads[self.bin_pos(slot, server)])
    }

    pub fn apply(&mut self, packet_pos: usize, b: BinId) {
        if let BinId::Slot { slot, server } = b {
            let pos = self.bin_pos(slot, server);
            self.loads[pos] += 1;
            self.sent[packet_pos] += 1;
            self.last[packet_pos] = Some(self.last[packet_pos].map_or(slot, |d| d.max(slot)));
        }
    }

    /// Current `Z` of the state.
    pub fn total(&self) -> Value {
        let mut z = Value::zero();
        for (i, p) in self.inst.packets.iter().enumerate() {
            z += p.term(self.sent[i], self.last_slot(i));
        }
        for (pos, &k) in self.loads.iter().enumerate() {
            if k > 0 {
                z -= self.inst.energy((pos % self.inst.servers as usize) as u32, k);
            }
        }
        z
    }
}

/// `Z(S)` with its per-packet and per-bin breakdown.
pub fn evaluate_z(inst: &Instance, alloc: &Allocation) -> Result<Valuation, AllocationError> {
    alloc.check_references(inst)?;
    let mut per_packet: BTreeMap<u32, PacketTerms> = BTreeMap::new();
    let mut per_slot_count: BTreeMap<(Slot, u32), u32> = BTreeMap::new();
    for (r, b) in alloc.iter() {
        if let BinId::Slot { slot, server } = b {
            *per_slot_count.entry((slot, server)).or_default() += 1;
            let e = per_packet.entry(r.packet).or_insert(PacketTerms {
                sent: 0,
                last_slot: None,
                utility: Value::zero(),
                delay: Value::zero(),
            });
            e.sent += 1;
            e.last_slot = Some(e.last_slot.map_or(slot, |d| d.max(slot)));
        }
    }
    for (id, terms) in per_packet.iter_mut() {
        let p: &Packet = inst.packet(*id).expect("checked");
        let last = terms.last_slot.expect("at least one slot").max(p.arrival);
        if p.deadline.is_some_and(|c| last > c) {
            continue;
        }
        terms.utility = p.utility(terms.sent);
        terms.delay = p.delay(last - p.arrival);
    }
    let per_slot: BTreeMap<(Slot, u32), Value> =
        per_slot_count.into_iter().map(|((t, s), k)| ((t, s), inst.energy(s, k))).collect();
    let mut v = Valuation { total: Value::zero(), per_packet, per_slot };
    v.total = v.recomputed_total();
    Ok(v)
}

/// `rho(r, b | S) = Z(S + (r, b)) - Z(S)`.
pub fn increment_rho(inst: &Instance, alloc: &Allocation, r: SubpacketRef, b: BinId) -> Result<Value, AllocationError> {
    if alloc.contains(&r) {
        return Err(AllocationError::AlreadyAllocated(r));
    }
    let pos = inst.packet_index(r.packet).ok_or(AllocationError::UnknownPacket(r.packet))?;
    if r.index == 0 || r.index > inst.packets[pos].subpackets {
        return Err(AllocationError::UnknownSubpacket(r));
    }
    if !inst.has_bin(b) {
        return Err(AllocationError::UnknownBin(b));
    }
    let st = LoadState::from_allocation(inst, alloc)?;
    Ok(st.rho(pos, b))
}

/// Weight of the edge between unit packet `p` and mini-slot `b_(t,i)` on
/// server 0: `V_p(t - A_p) - [g(i) - g(i-1)]` with
/// `V_p(x) = w_p (D_p(1) - C_p(x))`, forced to 0 past the deadline.
/// Negative weights are returned as-is.
pub fn binary_edge_weight(inst: &Instance, p: &Packet, slot: Slot, position: u32) -> Result<Value, MatchingError> {
    binary_edge_weight_on(inst, p, slot, 0, position)
}

pub fn binary_edge_weight_on(
    inst: &Instance,
    p: &Packet,
    slot: Slot,
    server: u32,
    position: u32,
) -> Result<Value, MatchingError> {
    if p.subpackets != 1 {
        return Err(MatchingError::NotBinary(p.id, p.subpackets));
    }
    if slot < p.arrival {
        return Err(MatchingError::BeforeArrival { packet: p.id, slot });
    }
    if position == 0 {
        return Err(MatchingError::ZeroPosition);
    }
    Ok(p.term(1, slot) - inst.energy_delta(server, position - 1))
}
