//! The locking-free instance `I_SM` with frozen increments
//!
//! ```text
//! mu(r, b | S) = rho(r, b | S)   if T_r <= T_b
//!              = 0               otherwise
//! ```
//!
//! greedy on it with the tie rule, and the checks tying its values to
//! Algorithm 2 and to the offline optimum.

use num_traits::Zero;
use serde::Serialize;

use crate::error::{AllocationError, OracleError};
use crate::greedy::{first_max, run_algorithm2, BinValue};
use crate::instance::{Allocation, BinId, Instance, Resource, SubpacketRef};
use crate::oracle::{max_y_bruteforce, offline_opt_bruteforce};
use crate::valuation::{evaluate_z, LoadState};
use crate::value::{self, Value};

/// `mu(r, b | S)` with `S` given by its load state.
pub fn mu(st: &LoadState<'_>, res: &Resource, b: BinId) -> Value {
    if b.open_at(res.arrival) {
        st.rho(res.packet_pos, b)
    } else {
        Value::zero()
    }
}

#[derive(Clone, Debug)]
pub struct SmInstance<'a> {
    pub inst: &'a Instance,
    /// `R_on`, in arrival order.
    pub resources: Vec<Resource>,
    /// Every bin of the instance, discard last. None of them lock.
    pub bins: Vec<BinId>,
}

pub fn build_ism(inst: &Instance) -> SmInstance<'_> {
    SmInstance { inst, resources: inst.resources(), bins: inst.regular_bins().chain([BinId::Discard]).collect() }
}

impl SmInstance<'_> {
    fn resource(&self, r: SubpacketRef) -> Result<&Resource, AllocationError> {
        self.resources.iter().find(|x| x.r == r).ok_or(AllocationError::UnknownSubpacket(r))
    }

    /// `mu(r, b | S)` for an explicit `S` not containing `r`.
    pub fn mu(&self, alloc: &Allocation, r: SubpacketRef, b: BinId) -> Result<Value, AllocationError> {
        if alloc.contains(&r) {
            return Err(AllocationError::AlreadyAllocated(r));
        }
        if !self.inst.has_bin(b) {
            return Err(AllocationError::UnknownBin(b));
        }
        let res = self.resource(r)?;
        let st = LoadState::from_allocation(self.inst, alloc)?;
        Ok(mu(&st, res, b))
    }

    /// `Y(S)`: the increments `mu` telescoped over `S` in arrival order.
    pub fn y_value(&self, alloc: &Allocation) -> Result<Value, AllocationError> {
        alloc.check_references(self.inst)?;
        let mut st = LoadState::new(self.inst);
        let mut y = Value::zero();
        for res in &self.resources {
            if let Some(b) = alloc.get(&res.r) {
                y += mu(&st, res, b);
                st.apply(res.packet_pos, b);
            }
        }
        Ok(y)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SmStep {
    pub r: SubpacketRef,
    pub bin: BinId,
    #[serde(with = "value")]
    pub mu: Value,
}

#[derive(Clone, Debug)]
pub struct SmRun {
    pub allocation: Allocation,
    pub y: Value,
    pub steps: Vec<SmStep>,
}

/// Greedy over every bin of `I_SM`. A positive maximum goes to the first
/// maximizer; a zero maximum goes to the first zero-valued bin that had not
/// locked when the resource arrived, which always exists since discard is
/// one. This is the same order Algorithm 2 breaks ties in.
///
/// `corrupt` replaces `mu(r, discard)` by 1, a deliberate fault used to check
/// that the equality test can fail.
pub fn greedy_on_with_rule(ism: &SmInstance<'_>, corrupt: bool) -> SmRun {
    let mut st = LoadState::new(ism.inst);
    let mut allocation = Allocation::new();
    let mut steps = Vec::new();
    let mut y = Value::zero();
    for res in &ism.resources {
        let values: Vec<BinValue> = ism
            .bins
            .iter()
            .map(|&bin| {
                let rho = if corrupt && bin.is_discard() { value::int(1) } else { mu(&st, res, bin) };
                BinValue { bin, rho }
            })
            .collect();
        let top = first_max(&values).rho.clone();
        let chosen = if top.is_zero() {
            values.iter().find(|v| v.rho.is_zero() && v.bin.open_at(res.arrival)).expect("discard qualifies")
        } else {
            first_max(&values)
        };
        st.apply(res.packet_pos, chosen.bin);
        allocation.insert(res.r, chosen.bin).expect("each resource once");
        y += &chosen.rho;
        steps.push(SmStep { r: res.r, bin: chosen.bin, mu: chosen.rho.clone() });
    }
    SmRun { allocation, y, steps }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Divergence {
    pub step: usize,
    pub r: SubpacketRef,
    pub greedy_bin: BinId,
    pub sm_bin: BinId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Lemma3Report {
    #[serde(rename = "Z_G", with = "value")]
    pub z_g: Value,
    #[serde(rename = "Y_GSM", with = "value")]
    pub y_gsm: Value,
    pub values_equal: bool,
    pub first_divergence: Option<Divergence>,
}

impl Lemma3Report {
    pub fn holds(&self) -> bool {
        self.values_equal && self.first_divergence.is_none()
    }
}

/// `Z(G) = Y(G_SM)` and the two greedy runs choose the same bin at every step.
pub fn verify_lemma3(inst: &Instance, corrupt: bool) -> Lemma3Report {
    let g = run_algorithm2(inst);
    let sm = greedy_on_with_rule(&build_ism(inst), corrupt);
    let first_divergence = g.steps.iter().zip(&sm.steps).enumerate().find_map(|(i, (a, b))| {
        (a.chosen_bin != b.bin).then_some(Divergence { step: i, r: b.r, greedy_bin: a.chosen_bin, sm_bin: b.bin })
    });
    Lemma3Report {
        values_equal: g.valuation.total == sm.y,
        z_g: g.valuation.total,
        y_gsm: sm.y,
        first_divergence,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LraReport {
    #[serde(rename = "Z_Omega", with = "value")]
    pub z_omega: Value,
    #[serde(rename = "Y_Omega", with = "value")]
    pub y_omega: Value,
    /// `Omega` uses no bin that locked before its resource arrived.
    pub feasible: bool,
    #[serde(rename = "Y_OmegaSM", with = "value::option")]
    pub y_omega_sm: Option<Value>,
    pub notice: Option<String>,
}

impl LraReport {
    /// `None` when the `Omega_SM` search did not fit the budget.
    pub fn holds(&self) -> Option<bool> {
        let base = self.feasible && self.z_omega == self.y_omega;
        self.y_omega_sm.as_ref().map(|y| base && self.z_omega <= *y)
    }
}

/// `Z(Omega) = Y(Omega)` and `Z(Omega) <= Y(Omega_SM)`, with `Omega_SM`
/// found by exhaustive search over `I_SM`.
pub fn verify_lemma_lra(inst: &Instance, omega: &Allocation, budget: u64) -> Result<LraReport, AllocationError> {
    let ism = build_ism(inst);
    let feasible = omega.check(inst).is_ok();
    let z_omega = evaluate_z(inst, omega)?.total;
    let y_omega = ism.y_value(omega)?;
    let sm = greedy_on_with_rule(&ism, false);
    let floor = if sm.y > y_omega { (sm.allocation, sm.y) } else { (omega.clone(), y_omega.clone()) };
    let (y_omega_sm, notice) = match max_y_bruteforce(inst, budget, floor) {
        Ok(r) => (Some(r.value), None),
        Err(e) => (None, Some(format!("skipped: {e}"))),
    };
    Ok(LraReport { z_omega, y_omega, feasible, y_omega_sm, notice })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChainLink {
    pub name: &'static str,
    /// `None` when a value in the link could not be computed.
    pub holds: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChainReport {
    #[serde(rename = "Z_G", with = "value")]
    pub z_g: Value,
    #[serde(rename = "Y_GSM", with = "value")]
    pub y_gsm: Value,
    #[serde(rename = "Y_OmegaSM", with = "value::option")]
    pub y_omega_sm: Option<Value>,
    #[serde(rename = "Z_Omega", with = "value")]
    pub z_omega: Value,
    pub links: Vec<ChainLink>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub witnesses: Vec<String>,
}

impl ChainReport {
    /// Every computable link holds.
    pub fn holds(&self) -> bool {
        self.links.iter().all(|l| l.holds != Some(false))
    }
}

/// `Z(G) = Y(G_SM) >= Y(Omega_SM)/2 >= Z(Omega)/2`, link by link.
pub fn verify_theorem2_chain(inst: &Instance, budget: u64) -> Result<ChainReport, OracleError> {
    let omega = offline_opt_bruteforce(inst, budget)?;
    let lemma3 = verify_lemma3(inst, false);
    let lra = verify_lemma_lra(inst, &omega.allocation, budget).expect("oracle allocations are well-formed");
    let half = value::ratio(1, 2);
    let z_omega = omega.valuation.total;
    let y_sm = lra.y_omega_sm.clone();
    let links = vec![
        ChainLink { name: "Z(G) = Y(G_SM)", holds: Some(lemma3.holds()) },
        ChainLink { name: "Y(G_SM) >= Y(Omega_SM)/2", holds: y_sm.as_ref().map(|y| lemma3.y_gsm >= y * &half) },
        ChainLink { name: "Y(Omega_SM) >= Z(Omega)", holds: lra.holds() },
        ChainLink { name: "Z(G) >= Z(Omega)/2", holds: Some(lemma3.z_g >= &z_omega * &half) },
    ];
    let mut witnesses = Vec::new();
    if let Some(d) = &lemma3.first_divergence {
        witnesses.push(format!(
            "step {}: {} went to {} under Algorithm 2 but {} under the rule",
            d.step, d.r, d.greedy_bin, d.sm_bin
        ));
    }
    for l in &links {
        if l.holds == Some(false) {
            witnesses.push(format!(
                "{} fails: Z_G={} Y_GSM={} Y_OmegaSM={} Z_Omega={}",
                l.name,
                value::format(&lemma3.z_g),
                value::format(&lemma3.y_gsm),
                y_sm.as_ref().map_or("n/a".into(), value::format),
                value::format(&z_omega)
            ));
        }
    }
    if let Some(n) = &lra.notice {
        witnesses.push(n.clone());
    }
    Ok(ChainReport { z_g: lemma3.z_g, y_gsm: lemma3.y_gsm, y_omega_sm: y_sm, z_omega, links, witnesses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostFamily;
    use crate::instance::{unit, Packet};
    use crate::oracle::DEFAULT_BUDGET;
    use crate::value::int;

    fn single(arrival: u32) -> Instance {
        Instance::new("r", 3, CostFamily::table(&[0, 1, 3])).with_packet(Packet::new(
            1,
            arrival,
            1,
            CostFamily::table(&[0, 5]),
            CostFamily::linear(int(1)),
        ))
    }

    #[test]
    fn mu_is_zero_on_locked_bins() {
        let inst = single(2);
        let ism = build_ism(&inst);
        assert_eq!(ism.mu(&Allocation::new(), unit(1), BinId::slot(1)).unwrap(), int(0));
        // 5 - 1 - C(t - t0)
        assert_eq!(ism.mu(&Allocation::new(), unit(1), BinId::slot(2)).unwrap(), int(4));
        assert_eq!(ism.mu(&Allocation::new(), unit(1), BinId::slot(3)).unwrap(), int(3));
    }

    #[test]
    fn single_packet_chain() {
        let inst = Instance::new("r", 2, CostFamily::linear(int(1))).with_packet(Packet::new(
            1,
            0,
            1,
            CostFamily::table(&[0, 5]),
            CostFamily::linear(int(1)),
        ));
        let r = verify_theorem2_chain(&inst, DEFAULT_BUDGET).unwrap();
        assert_eq!((r.z_g.clone(), r.y_gsm.clone(), r.z_omega.clone()), (int(4), int(4), int(4)));
        assert_eq!(r.y_omega_sm, Some(int(4)));
        assert!(r.holds(), "{r:?}");
    }

    #[test]
    fn empty_instance_chain() {
        let inst = Instance::new("e", 2, CostFamily::zero());
        let r = verify_theorem2_chain(&inst, DEFAULT_BUDGET).unwrap();
        assert_eq!(r.z_g, int(0));
        assert_eq!(r.y_omega_sm, Some(int(0)));
        assert!(r.holds());
        assert_eq!(greedy_on_with_rule(&build_ism(&inst), false).y, int(0));
    }

    #[test]
    fn corrupted_discard_breaks_lemma3() {
        let inst = Instance::new("r", 2, CostFamily::linear(int(1))).with_packet(Packet::new(
            1,
            0,
            1,
            CostFamily::table(&[0, 1]),
            CostFamily::linear(int(1)),
        ));
        assert!(verify_lemma3(&inst, false).holds());
        let bad = verify_lemma3(&inst, true);
        assert!(!bad.holds());
        assert_eq!(bad.first_divergence.unwrap().sm_bin, BinId::Discard);
    }

    #[test]
    fn lemma_lra_on_greedy_optimum() {
        let inst = single(0);
        let omega = offline_opt_bruteforce(&inst, DEFAULT_BUDGET).unwrap();
        let rep = verify_lemma_lra(&inst, &omega.allocation, DEFAULT_BUDGET).unwrap();
        assert_eq!(rep.holds(), Some(true));
        assert_eq!(rep.z_omega, rep.y_omega);
    }

    #[test]
    fn report_serializes_with_named_values() {
        let r = verify_theorem2_chain(&single(0), DEFAULT_BUDGET).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for k in ["Z_G", "Y_GSM", "Y_OmegaSM", "Z_Omega", "links"] {
            assert!(v.get(k).is_some(), "{k}");
        }
    }
}
