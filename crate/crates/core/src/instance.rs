//! Instance model: packets, bins, allocations, and the JSON instance format.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use num_traits::{One, Signed};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cost::CostFamily;
use crate::error::{AllocationError, ModelError};
use crate::value::{self, Value};

pub type Slot = u32;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Packet {
    pub id: u32,
    pub arrival: Slot,
    pub subpackets: u32,
    #[serde(default = "one", with = "value")]
    pub weight: Value,
    pub distortion: CostFamily,
    pub delay_cost: CostFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline: Option<Slot>,
}

fn one() -> Value {
    Value::one()
}

fn default_servers() -> u32 {
    1
}

impl Packet {
    pub fn new(id: u32, arrival: Slot, subpackets: u32, distortion: CostFamily, delay_cost: CostFamily) -> Self {
        Packet { id, arrival, subpackets, weight: Value::one(), distortion, delay_cost, deadline: None }
    }

    pub fn with_deadline(mut self, deadline: Slot) -> Self {
        self.deadline = Some(deadline);
        self
    }

    pub fn with_weight(mut self, weight: Value) -> Self {
        self.weight = weight;
        self
    }

    /// Weighted utility `w_p D_p(n)`.
    pub fn utility(&self, n: u32) -> Value {
        &self.weight * self.distortion.eval(n.into())
    }

    /// Weighted delay cost `w_p C_p(x)`.
    pub fn delay(&self, x: u32) -> Value {
        &self.weight * self.delay_cost.eval(x.into())
    }

    /// Value of the per-packet term of the objective when `n` sub-packets are
    /// sent and the last of them goes out in slot `last`: zero when nothing is
    /// sent or the deadline is missed, `w (D(n) - C(last - A))` otherwise.
    pub fn term(&self, n: u32, last: Slot) -> Value {
        if n == 0 || self.deadline.is_some_and(|c| last > c) {
            return Value::from_integer(0.into());
        }
        self.utility(n) - self.delay(last.saturating_sub(self.arrival))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    #[serde(default)]
    pub label: String,
    pub horizon: Slot,
    #[serde(default = "default_servers")]
    pub servers: u32,
    pub energy: Vec<CostFamily>,
    pub packets: Vec<Packet>,
}

impl Instance {
    pub fn new(label: impl Into<String>, horizon: Slot, energy: CostFamily) -> Self {
        Instance { label: label.into(), horizon, servers: 1, energy: vec![energy], packets: Vec::new() }
    }

    pub fn with_packet(mut self, p: Packet) -> Self {
        self.packets.push(p);
        self
    }

    /// Parses and structurally checks a JSON instance document.
    pub fn from_json(text: &str) -> Result<Instance, ModelError> {
        let inst: Instance = serde_json::from_str(text).map_err(ModelError::from_json)?;
        inst.check_structure()?;
        Ok(inst)
    }

    /// Canonical serialization: sorted keys, explicit weights and server count.
    pub fn to_json(&self) -> String {
        // serde_json::Value maps are BTreeMaps, so keys come out sorted.
        let tree = serde_json::to_value(self).expect("instance serializes");
        let mut s = serde_json::to_string_pretty(&tree).expect("json value prints");
        s.push('\n');
        s
    }

    /// Invariants that make an instance meaningless when violated. Shape
    /// assumptions on the cost functions are checked separately by
    /// [`crate::validate::validate_instance`].
    pub fn check_structure(&self) -> Result<(), ModelError> {
        if self.servers == 0 {
            return Err(ModelError::Instance("servers must be at least 1".into()));
        }
        if self.energy.len() != self.servers as usize {
            return Err(ModelError::Instance(format!(
                "{} energy functions given for {} servers",
                self.energy.len(),
                self.servers
            )));
        }
        let mut seen = HashSet::new();
        for p in &self.packets {
            let err = |message: &str| ModelError::Packet { packet: p.id, message: message.into() };
            if !seen.insert(p.id) {
                return Err(err("duplicate packet id"));
            }
            if p.subpackets == 0 {
                return Err(err("sub-packet count must be positive"));
            }
            if !p.weight.is_positive() {
                return Err(err("weight must be positive"));
            }
            if p.deadline.is_some_and(|c| c < p.arrival) {
                return Err(err("deadline precedes arrival"));
            }
        }
        Ok(())
    }

    pub fn packet(&self, id: u32) -> Option<&Packet> {
        self.packets.iter().find(|p| p.id == id)
    }

    pub fn packet_index(&self, id: u32) -> Option<usize> {
        self.packets.iter().position(|p| p.id == id)
    }

    pub fn total_subpackets(&self) -> u32 {
        self.packets.iter().map(|p| p.subpackets).sum()
    }

    pub fn is_binary(&self) -> bool {
        self.packets.iter().all(|p| p.subpackets == 1)
    }

    pub fn energy(&self, server: u32, count: u32) -> Value {
        self.energy[server as usize].eval(count.into())
    }

    /// `g_s(count + 1) - g_s(count)`.
    pub fn energy_delta(&self, server: u32, count: u32) -> Value {
        self.energy[server as usize].delta(count.into())
    }

    /// Every regular bin, ordered by slot then server.
    pub fn regular_bins(&self) -> impl Iterator<Item = BinId> + '_ {
        (0..=self.horizon).flat_map(move |slot| (0..self.servers).map(move |server| BinId::Slot { slot, server }))
    }

    pub fn has_bin(&self, b: BinId) -> bool {
        match b {
            BinId::Discard => true,
            BinId::Slot { slot, server } => slot <= self.horizon && server < self.servers,
        }
    }

    /// All sub-packets in arrival order; simultaneous arrivals are ordered by
    /// packet id and then by sub-packet index.
    pub fn resources(&self) -> Vec<Resource> {
        let mut out: Vec<Resource> = self
            .packets
            .iter()
            .enumerate()
            .flat_map(|(pi, p)| {
                (1..=p.subpackets).map(move |index| Resource {
                    r: SubpacketRef { packet: p.id, index },
                    packet_pos: pi,
                    arrival: p.arrival,
                })
            })
            .collect();
        out.sort_by_key(|x| (x.arrival, x.r.packet, x.r.index));
        out
    }
}

/// A sub-packet together with its arrival time and the position of its
/// packet in [`Instance::packets`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Resource {
    pub r: SubpacketRef,
    pub packet_pos: usize,
    pub arrival: Slot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubpacketRef {
    pub packet: u32,
    pub index: u32,
}

impl fmt::Display for SubpacketRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}#{}", self.packet, self.index)
    }
}

/// A bin. Regular bins are (slot, server) pairs that lock at the end of
/// their slot; the discard bin never locks and is worth nothing.
///
/// The derived order (slot, then server, discard last) is the tie-break
/// order used by every greedy rule in this crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinId {
    Slot { slot: Slot, server: u32 },
    Discard,
}

impl BinId {
    pub fn slot(slot: Slot) -> Self {
        BinId::Slot { slot, server: 0 }
    }

    pub fn is_discard(self) -> bool {
        matches!(self, BinId::Discard)
    }

    /// `None` stands for a bin that never locks.
    pub fn lock_time(self) -> Option<Slot> {
        match self {
            BinId::Slot { slot, .. } => Some(slot),
            BinId::Discard => None,
        }
    }

    /// Whether a resource arriving at `t` may use this bin (`t <= T_b`).
    pub fn open_at(self, t: Slot) -> bool {
        self.lock_time().is_none_or(|lock| t <= lock)
    }
}

impl fmt::Display for BinId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BinId::Slot { slot, server } => write!(f, "t{slot}s{server}"),
            BinId::Discard => f.write_str("discard"),
        }
    }
}

impl FromStr for BinId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "discard" {
            return Ok(BinId::Discard);
        }
        let rest = s.strip_prefix('t').ok_or_else(|| format!("bad bin {s:?}"))?;
        let (slot, server) = rest.split_once('s').ok_or_else(|| format!("bad bin {s:?}"))?;
        Ok(BinId::Slot {
            slot: slot.parse().map_err(|_| format!("bad bin {s:?}"))?,
            server: server.parse().map_err(|_| format!("bad bin {s:?}"))?,
        })
    }
}

impl Serialize for BinId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BinId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A set of (sub-packet, bin) pairs; each sub-packet appears at most once.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Allocation {
    entries: BTreeMap<SubpacketRef, BinId>,
}

impl Allocation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, r: SubpacketRef, b: BinId) -> Result<(), AllocationError> {
        if self.entries.contains_key(&r) {
            return Err(AllocationError::AlreadyAllocated(r));
        }
        self.entries.insert(r, b);
        Ok(())
    }

    pub fn remove(&mut self, r: &SubpacketRef) -> Option<BinId> {
        self.entries.remove(r)
    }

    pub fn get(&self, r: &SubpacketRef) -> Option<BinId> {
        self.entries.get(r).copied()
    }

    pub fn contains(&self, r: &SubpacketRef) -> bool {
        self.entries.contains_key(r)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (SubpacketRef, BinId)> + '_ {
        self.entries.iter().map(|(r, b)| (*r, *b))
    }

    /// Checks the allocation against the instance: known packets and bins,
    /// no regular bin before the packet's arrival, sub-packets of one packet
    /// in index order (discard counts as later than every slot).
    pub fn check(&self, inst: &Instance) -> Result<(), AllocationError> {
        self.check_references(inst)?;
        for (r, b) in self.iter() {
            let p = inst.packet(r.packet).expect("checked above");
            if !b.open_at(p.arrival) {
                return Err(AllocationError::LockedBin { r, bin: b });
            }
        }
        for p in &inst.packets {
            let mut prev: Option<BinId> = None;
            for index in 1..=p.subpackets {
                let Some(b) = self.get(&SubpacketRef { packet: p.id, index }) else { continue };
                if prev.is_some_and(|pb| slot_rank(pb) > slot_rank(b)) {
                    return Err(AllocationError::OutOfOrder(p.id));
                }
                prev = Some(b);
            }
        }
        Ok(())
    }

    /// Same bins per packet, handed to the packet's chosen indices in slot
    /// order. Z only sees counts and last slots, so the value is unchanged.
    pub fn in_order(&self) -> Allocation {
        let mut per_packet: BTreeMap<u32, (Vec<u32>, Vec<BinId>)> = BTreeMap::new();
        for (r, b) in self.iter() {
            let e = per_packet.entry(r.packet).or_default();
            e.0.push(r.index);
            e.1.push(b);
        }
        let mut out = Allocation::new();
        for (packet, (indices, mut bins)) in per_packet {
            bins.sort_by_key(|&b| (slot_rank(b), b));
            for (index, b) in indices.into_iter().zip(bins) {
                out.entries.insert(SubpacketRef { packet, index }, b);
            }
        }
        out
    }

    /// Only checks that every packet, sub-packet and bin exists.
    pub fn check_references(&self, inst: &Instance) -> Result<(), AllocationError> {
        for (r, b) in self.iter() {
            let p = inst.packet(r.packet).ok_or(AllocationError::UnknownPacket(r.packet))?;
            if r.index == 0 || r.index > p.subpackets {
                return Err(AllocationError::UnknownSubpacket(r));
            }
            if !inst.has_bin(b) {
                return Err(AllocationError::UnknownBin(b));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.iter()
                .map(|(r, b)| serde_json::json!({"packet": r.packet, "index": r.index, "bin": b.to_string()}))
                .collect(),
        )
    }
}

fn slot_rank(b: BinId) -> u64 {
    b.lock_time().map_or(u64::MAX, u64::from)
}

impl FromIterator<(SubpacketRef, BinId)> for Allocation {
    fn from_iter<I: IntoIterator<Item = (SubpacketRef, BinId)>>(iter: I) -> Self {
        Allocation { entries: iter.into_iter().collect() }
    }
}

/// Convenience for one-sub-packet allocations in tests and examples.
pub fn unit(packet: u32) -> SubpacketRef {
    SubpacketRef { packet, index: 1 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::int;

    fn one_packet() -> Instance {
        Instance::new("t", 3, CostFamily::linear(int(1))).with_packet(Packet::new(
            1,
            0,
            1,
            CostFamily::table(&[0, 5]),
            CostFamily::linear(int(1)),
        ))
    }

    #[test]
    fn minimal_document_loads() {
        let text = r#"{"label":"m","horizon":3,"servers":1,
            "energy":[{"kind":"linear","params":[1]}],
            "packets":[{"id":1,"arrival":0,"subpackets":1,"weight":1,
              "distortion":{"kind":"tabulated","table":[0,5]},
              "delay_cost":{"kind":"linear","params":[1]}}]}"#;
        let inst = Instance::from_json(text).unwrap();
        assert_eq!(inst.packets.len(), 1);
        assert_eq!(inst, one_packet().tap_label("m"));
    }

    trait TapLabel {
        fn tap_label(self, l: &str) -> Self;
    }
    impl TapLabel for Instance {
        fn tap_label(mut self, l: &str) -> Self {
            self.label = l.into();
            self
        }
    }

    #[test]
    fn deadline_before_arrival_is_rejected() {
        let text = r#"{"horizon":3,"energy":[{"kind":"linear","params":[1]}],
            "packets":[{"id":1,"arrival":2,"subpackets":1,"deadline":1,
              "distortion":{"kind":"linear","params":[5]},
              "delay_cost":{"kind":"linear","params":[1]}}]}"#;
        let err = Instance::from_json(text).unwrap_err();
        assert!(err.to_string().contains("deadline precedes arrival"), "{err}");
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = Instance::from_json("{\n  \"horizon\": -1\n}").unwrap_err();
        match err {
            ModelError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
        let err = Instance::from_json(r#"{"horizon":1,"energy":[{"kind":"cubic","params":[1]}],"packets":[]}"#);
        assert!(err.is_err());
        let err = Instance::from_json(r#"{"horizon":1,"energy":[]}"#);
        assert!(err.is_err());
    }

    #[test]
    fn empty_packet_list_round_trips() {
        let inst = Instance::new("empty", 2, CostFamily::zero());
        let text = inst.to_json();
        assert!(text.contains("\"packets\": []"));
        assert_eq!(Instance::from_json(&text).unwrap(), inst);
    }

    #[test]
    fn bin_order_and_text() {
        let a = BinId::slot(1);
        let b = BinId::Slot { slot: 1, server: 1 };
        let c = BinId::slot(2);
        assert!(a < b && b < c && c < BinId::Discard);
        for bin in [a, b, c, BinId::Discard] {
            assert_eq!(bin.to_string().parse::<BinId>().unwrap(), bin);
        }
        assert!(BinId::slot(3).open_at(3));
        assert!(!BinId::slot(3).open_at(4));
        assert!(BinId::Discard.open_at(u32::MAX));
    }

    #[test]
    fn allocation_checks() {
        let inst = one_packet();
        let mut a = Allocation::new();
        a.insert(unit(1), BinId::slot(2)).unwrap();
        assert!(a.check(&inst).is_ok());
        assert_eq!(a.insert(unit(1), BinId::slot(1)), Err(AllocationError::AlreadyAllocated(unit(1))));
        let bad: Allocation = [(unit(9), BinId::slot(0))].into_iter().collect();
        assert_eq!(bad.check(&inst), Err(AllocationError::UnknownPacket(9)));
        let bad: Allocation = [(unit(1), BinId::slot(7))].into_iter().collect();
        assert_eq!(bad.check(&inst), Err(AllocationError::UnknownBin(BinId::slot(7))));
    }

    #[test]
    fn out_of_order_subpackets_rejected() {
        let inst = Instance::new("t", 3, CostFamily::zero()).with_packet(Packet::new(
            1,
            0,
            2,
            CostFamily::table(&[0, 5, 8]),
            CostFamily::zero(),
        ));
        let a: Allocation = [
            (SubpacketRef { packet: 1, index: 1 }, BinId::slot(2)),
            (SubpacketRef { packet: 1, index: 2 }, BinId::slot(1)),
        ]
        .into_iter()
        .collect();
        assert_eq!(a.check(&inst), Err(AllocationError::OutOfOrder(1)));
        let fixed = a.in_order();
        assert!(fixed.check(&inst).is_ok());
        assert_eq!(fixed.get(&SubpacketRef { packet: 1, index: 1 }), Some(BinId::slot(1)));
    }
}
