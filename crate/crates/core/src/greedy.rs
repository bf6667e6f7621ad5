//! Algorithm 2: each arriving sub-packet is irrevocably given the open bin
//! (or the discard bin) with the largest increment of `Z`.

use serde::Serialize;
use serde_json::json;

use crate::error::AllocationError;
use crate::instance::{Allocation, BinId, Instance, Resource, Slot, SubpacketRef};
use crate::valuation::{evaluate_z, LoadState, Valuation};
use crate::value::{self, Value};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BinValue {
    pub bin: BinId,
    #[serde(with = "value")]
    pub rho: Value,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Step {
    pub step: usize,
    pub packet: u32,
    pub index: u32,
    pub arrival: Slot,
    pub chosen_bin: BinId,
    #[serde(with = "value")]
    pub rho: Value,
    /// Every bin that was considered, in tie-break order.
    pub alternatives: Vec<BinValue>,
}

pub struct GreedyState<'a> {
    loads: LoadState<'a>,
    partial: Allocation,
    clock: Slot,
    steps: Vec<Step>,
    warnings: Vec<String>,
}

/// Picks the first bin, in `candidates` order, with the largest value. With
/// candidates ordered by slot, then server, then discard, this prefers
/// positive bins, then a zero-valued open bin over discarding, then the
/// earliest slot and lowest server.
pub(crate) fn first_max(candidates: &[BinValue]) -> &BinValue {
    let mut best = &candidates[0];
    for c in &candidates[1..] {
        if c.rho > best.rho {
            best = c;
        }
    }
    best
}

impl<'a> GreedyState<'a> {
    pub fn new(inst: &'a Instance) -> Self {
        GreedyState { loads: LoadState::new(inst), partial: Allocation::new(), clock: 0, steps: Vec::new(), warnings: Vec::new() }
    }

    pub fn clock(&self) -> Slot {
        self.clock
    }

    pub fn partial(&self) -> &Allocation {
        &self.partial
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// Bins open to a resource arriving at `t`: slots `t..=T` on every
    /// server, then discard.
    pub fn open_bins(inst: &Instance, t: Slot) -> Vec<BinId> {
        inst.regular_bins().filter(|b| b.open_at(t)).chain([BinId::Discard]).collect()
    }

    /// Allocates `r`, which arrives at `arrival`, and advances the clock.
    pub fn step(&mut self, r: SubpacketRef, arrival: Slot) -> Result<(BinId, Value), AllocationError> {
        let inst = self.loads.instance();
        if self.partial.contains(&r) {
            return Err(AllocationError::AlreadyAllocated(r));
        }
        if arrival < self.clock {
            return Err(AllocationError::ArrivedInPast { r, arrival, clock: self.clock });
        }
        let pos = inst.packet_index(r.packet).ok_or(AllocationError::UnknownPacket(r.packet))?;
        if r.index == 0 || r.index > inst.packets[pos].subpackets {
            return Err(AllocationError::UnknownSubpacket(r));
        }
        self.clock = arrival;
        let alternatives: Vec<BinValue> = Self::open_bins(inst, arrival)
            .into_iter()
            .map(|bin| BinValue { bin, rho: self.loads.rho(pos, bin) })
            .collect();
        let chosen = first_max(&alternatives).clone();
        if chosen.bin.lock_time() == Some(inst.horizon) && arrival < inst.horizon {
            self.warnings.push(format!("{r}: best bin is the last slot {}; a later slot might do better", inst.horizon));
        }
        self.loads.apply(pos, chosen.bin);
        self.partial.insert(r, chosen.bin)?;
        self.steps.push(Step {
            step: self.steps.len(),
            packet: r.packet,
            index: r.index,
            arrival,
            chosen_bin: chosen.bin,
            rho: chosen.rho.clone(),
            alternatives,
        });
        Ok((chosen.bin, chosen.rho))
    }
}

/// Allocates one resource in the running state.
pub fn greedy_step(state: &mut GreedyState<'_>, res: &Resource) -> Result<(BinId, Value), AllocationError> {
    state.step(res.r, res.arrival)
}

#[derive(Clone, Debug)]
pub struct GreedyRun {
    pub allocation: Allocation,
    pub valuation: Valuation,
    pub steps: Vec<Step>,
    pub warnings: Vec<String>,
}

impl GreedyRun {
    /// Sum of the per-step increments; equals `valuation.total`.
    pub fn telescoped(&self) -> Value {
        self.steps.iter().fold(value::zero(), |acc, s| acc + &s.rho)
    }

    pub fn steps_json_lines(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            let alts: Vec<serde_json::Value> =
                s.alternatives.iter().map(|a| json!({"bin": a.bin.to_string(), "rho": value::to_json(&a.rho)})).collect();
            let rec = json!({
                "step": s.step,
                "packet": s.packet,
                "index": s.index,
                "chosen_bin": s.chosen_bin.to_string(),
                "rho": value::to_json(&s.rho),
                "alternatives": alts,
            });
            out.push_str(&rec.to_string());
            out.push('\n');
        }
        out
    }
}

/// Runs Algorithm 2 over the instance's resources in arrival order.
pub fn run_algorithm2(inst: &Instance) -> GreedyRun {
    let mut st = GreedyState::new(inst);
    for res in inst.resources() {
        greedy_step(&mut st, &res).expect("resources are well-formed and ordered");
    }
    let valuation = evaluate_z(inst, &st.partial).expect("greedy only uses known bins");
    GreedyRun { allocation: st.partial, valuation, steps: st.steps, warnings: st.warnings }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostFamily;
    use crate::instance::{unit, Packet};
    use crate::value::int;

    fn one_packet(d: i64) -> Instance {
        Instance::new("g", 2, CostFamily::linear(int(1))).with_packet(Packet::new(
            1,
            0,
            1,
            CostFamily::table(&[0, d]),
            CostFamily::linear(int(1)),
        ))
    }

    #[test]
    fn single_packet_goes_to_slot_zero() {
        let run = run_algorithm2(&one_packet(5));
        let rhos: Vec<Value> = run.steps[0].alternatives.iter().map(|a| a.rho.clone()).collect();
        assert_eq!(rhos, vec![int(4), int(3), int(2), int(0)]);
        assert_eq!(run.allocation.get(&unit(1)), Some(BinId::slot(0)));
        assert_eq!(run.valuation.total, int(4));
    }

    #[test]
    fn worthless_packet_is_discarded() {
        let run = run_algorithm2(&one_packet(0));
        assert_eq!(run.allocation.get(&unit(1)), Some(BinId::Discard));
        assert_eq!(run.steps[0].rho, int(0));
        assert_eq!(run.valuation.total, int(0));
    }

    #[test]
    fn zero_tie_prefers_an_open_slot_over_discard() {
        // 2 - C(0) - g(1) = 0 at slot 0
        let inst = Instance::new("g", 1, CostFamily::linear(int(2))).with_packet(Packet::new(
            1,
            0,
            1,
            CostFamily::table(&[0, 2]),
            CostFamily::linear(int(1)),
        ));
        let run = run_algorithm2(&inst);
        assert_eq!(run.allocation.get(&unit(1)), Some(BinId::slot(0)));
    }

    #[test]
    fn equal_increments_pick_the_earlier_slot() {
        let inst = Instance::new("g", 3, CostFamily::linear(int(1))).with_packet(Packet::new(
            1,
            0,
            1,
            CostFamily::table(&[0, 5]),
            CostFamily::zero(),
        ));
        let run = run_algorithm2(&inst);
        assert!(run.steps[0].alternatives[..4].iter().all(|a| a.rho == int(4)));
        assert_eq!(run.allocation.get(&unit(1)), Some(BinId::slot(0)));
    }

    #[test]
    fn convex_energy_pushes_second_packet_later() {
        // rho table for the second packet: slot 0: 6 - 0 - 2 = 4, slot 1: 6 - 1 - 1 = 4, slot 2: 3
        let mut inst = Instance::new("g", 2, CostFamily::table(&[0, 1, 3, 6]));
        for id in 1..=2 {
            inst.packets.push(Packet::new(id, 0, 1, CostFamily::table(&[0, 6]), CostFamily::linear(int(1))));
        }
        let run = run_algorithm2(&inst);
        let second: Vec<Value> = run.steps[1].alternatives.iter().map(|a| a.rho.clone()).collect();
        assert_eq!(second, vec![int(4), int(4), int(3), int(0)]);
        assert_eq!(run.allocation.get(&unit(2)), Some(BinId::slot(0)));
        assert_eq!(run.valuation.total, int(9));
        assert_eq!(run.telescoped(), run.valuation.total);
    }

    #[test]
    fn step_rejects_repeats_and_time_travel() {
        let inst = one_packet(5);
        let mut st = GreedyState::new(&inst);
        st.step(unit(1), 1).unwrap();
        assert_eq!(st.step(unit(1), 1), Err(AllocationError::AlreadyAllocated(unit(1))));
        let inst2 = one_packet(5).with_packet(Packet::new(2, 0, 1, CostFamily::table(&[0, 5]), CostFamily::zero()));
        let mut st = GreedyState::new(&inst2);
        st.step(unit(1), 1).unwrap();
        assert!(matches!(st.step(unit(2), 0), Err(AllocationError::ArrivedInPast { .. })));
    }

    #[test]
    fn horizon_choice_warns() {
        let mut inst = Instance::new("g", 1, CostFamily::table(&[0, 1, 3]));
        for id in 1..=2 {
            inst.packets.push(Packet::new(id, 0, 1, CostFamily::table(&[0, 10]), CostFamily::zero()));
        }
        let run = run_algorithm2(&inst);
        assert_eq!(run.allocation.get(&unit(2)), Some(BinId::slot(1)));
        assert_eq!(run.warnings.len(), 1);
    }

    #[test]
    fn step_log_is_json_lines() {
        let run = run_algorithm2(&one_packet(5));
        let line = run.steps_json_lines();
        let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
        assert_eq!(v["chosen_bin"], "t0s0");
        assert_eq!(v["alternatives"].as_array().unwrap().len(), 4);
    }
}
