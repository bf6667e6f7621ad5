//! Constructors for three problems the model covers: multi-source age of
//! information, remote sampling, and speed scaling on several servers.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{CostFamily, Shape};
use crate::error::AdapterError;
use crate::instance::{Instance, Packet, Slot};
use crate::validate::validate_instance;
use crate::value::{self, int, ratio, Value};

fn validated(inst: Instance) -> Result<Instance, AdapterError> {
    inst.check_structure()?;
    let report = validate_instance(&inst);
    if !report.is_valid() {
        return Err(crate::error::ModelError::Instance(format!("adapter output fails validation: {report}")).into());
    }
    Ok(inst)
}

// ---------------------------------------------------------------------------
// Age of information

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AoiSource {
    /// Event times, strictly increasing.
    pub events: Vec<Slot>,
    /// Value of delivering any one event of this source.
    #[serde(with = "value")]
    pub value: Value,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AoiConfig {
    pub sources: Vec<AoiSource>,
    pub horizon: Slot,
    /// Per-slot energy; [`single_path_energy`] makes a second transmission in
    /// a slot cost `penalty`.
    pub energy: CostFamily,
}

/// `g(0) = g(1) = 0` and every further transmission in the slot costs
/// `penalty`.
pub fn single_path_energy(penalty: i64) -> CostFamily {
    CostFamily::table(&[0, 0, penalty])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventRef {
    pub source: usize,
    pub event: usize,
}

/// Which events are scheduled and in which slot.
pub type AoiSchedule = BTreeMap<EventRef, Slot>;

#[derive(Clone, Debug)]
pub struct AoiModel {
    pub config: AoiConfig,
    /// One single-sub-packet packet per event, ids in (time, source) order.
    /// Its delay cost `x^2 / 2` is the sawtooth area of an event sent `x`
    /// slots after it happened with nothing of its source scheduled before.
    pub instance: Instance,
    /// `packet_ids[s][i]` is the packet standing for event `i` of source `s`.
    pub packet_ids: Vec<Vec<u32>>,
}

/// Builds the instance and the increment oracle for a multi-source AoI
/// configuration.
pub fn aoi_multisource(config: AoiConfig) -> Result<AoiModel, AdapterError> {
    for (s, src) in config.sources.iter().enumerate() {
        if src.events.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AdapterError::Events { source_index: s, message: "event times must be strictly increasing".into() });
        }
        if let Some(&last) = src.events.last().filter(|&&t| t > config.horizon) {
            return Err(AdapterError::Events { source_index: s, message: format!("event at {last} is past the horizon {}", config.horizon) });
        }
        if src.value.is_negative() {
            return Err(AdapterError::Events { source_index: s, message: "value must be non-negative".into() });
        }
    }
    let mut order: Vec<(Slot, usize, usize)> = config
        .sources
        .iter()
        .enumerate()
        .flat_map(|(s, src)| src.events.iter().enumerate().map(move |(i, &t)| (t, s, i)))
        .collect();
    order.sort();
    let mut packet_ids: Vec<Vec<u32>> = config.sources.iter().map(|s| vec![0; s.events.len()]).collect();
    let mut inst = Instance::new("aoi", config.horizon, config.energy.clone());
    for (k, &(t, s, i)) in order.iter().enumerate() {
        let id = k as u32 + 1;
        packet_ids[s][i] = id;
        let d = CostFamily::Tabulated(vec![Value::zero(), config.sources[s].value.clone()]);
        let age = CostFamily::Power { coef: ratio(1, 2), exponent: 2 };
        inst.packets.push(Packet::new(id, t, 1, d, age));
    }
    let instance = validated(inst)?;
    Ok(AoiModel { config, instance, packet_ids })
}

impl AoiModel {
    fn event_time(&self, e: EventRef) -> Result<Slot, AdapterError> {
        self.config
            .sources
            .get(e.source)
            .and_then(|s| s.events.get(e.event))
            .copied()
            .ok_or(AdapterError::Events { source_index: e.source, message: format!("no event {}", e.event) })
    }

    /// Increment of sending event `e` in `slot` given `schedule`.
    ///
    /// Zero if a newer event of the source is already scheduled (it makes
    /// `e` outdated) or if an older one goes out in `slot` or later (the age
    /// does not grow and that older event would lose its value). Otherwise
    /// the event's value minus the area the sawtooth adds between the last
    /// scheduled delivery of the source (or the event time) and `slot`.
    /// Interleavings the figure does not cover also get this area rule.
    pub fn rho(&self, schedule: &AoiSchedule, e: EventRef, slot: Slot) -> Result<Value, AdapterError> {
        let te = self.event_time(e)?;
        if slot < te || slot > self.config.horizon {
            return Err(AdapterError::Events {
                source_index: e.source,
                message: format!("slot {slot} is outside {te}..={}", self.config.horizon),
            });
        }
        let same = schedule.iter().filter(|(r, _)| r.source == e.source && r.event != e.event);
        let mut latest: Option<Slot> = None;
        for (r, &t) in same {
            if r.event > e.event {
                return Ok(Value::zero());
            }
            latest = Some(latest.map_or(t, |l| l.max(t)));
        }
        if latest.is_some_and(|l| slot <= l) {
            return Ok(Value::zero());
        }
        let base = latest.map_or(te, |l| l.max(te));
        let age = int(i64::from(base - te));
        let j = int(i64::from(slot - base));
        let area = &j * age + &j * &j / int(2);
        Ok(&self.config.sources[e.source].value - area)
    }

    /// The edges of event `e` to every slot it can go in.
    pub fn edge_weights(&self, schedule: &AoiSchedule, e: EventRef) -> Result<Vec<(Slot, Value)>, AdapterError> {
        let te = self.event_time(e)?;
        (te..=self.config.horizon).map(|t| Ok((t, self.rho(schedule, e, t)?))).collect()
    }
}

/// The three-event configuration of the sawtooth figure: `e1` and `e2` of
/// one source are scheduled in slots `t` and `t + 2`, and `e3` happens at
/// `t3 <= t + 1`. Returns the model, the schedule and `e3`.
pub fn aoi_figure(t1: Slot, t2: Slot, t: Slot, t3: Slot, value: Value) -> Result<(AoiModel, AoiSchedule, EventRef), AdapterError> {
    if !(t1 < t2 && t2 <= t && t2 < t3 && t3 <= t + 1) {
        return Err(AdapterError::Events { source_index: 0, message: "need t1 < t2 <= t, t2 < t3 <= t + 1".into() });
    }
    let config = AoiConfig {
        sources: vec![AoiSource { events: vec![t1, t2, t3], value }],
        horizon: t + 4,
        energy: single_path_energy(1),
    };
    let model = aoi_multisource(config)?;
    let mut schedule = AoiSchedule::new();
    schedule.insert(EventRef { source: 0, event: 0 }, t);
    schedule.insert(EventRef { source: 0, event: 1 }, t + 2);
    Ok((model, schedule, EventRef { source: 0, event: 2 }))
}

// ---------------------------------------------------------------------------
// Speed scaling

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Job {
    pub arrival: Slot,
    /// Work in unit sub-packets.
    pub size: u32,
    /// Value of each unit of work done.
    #[serde(with = "value")]
    pub unit_value: Value,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeedScalingConfig {
    pub jobs: Vec<Job>,
    /// Power function of each server.
    pub powers: Vec<CostFamily>,
    pub horizon: Slot,
    /// Cost per slot of flow time.
    #[serde(with = "value")]
    pub flow_weight: Value,
    /// Weights every job so that dropping work never pays.
    pub mandatory: bool,
}

/// Jobs become packets of unit sub-packets with linear value and linear
/// flow-time cost; each server gets its own power function.
///
/// In mandatory mode job `p` gets the integer weight
/// `floor(G / (u_p - c T)) + 1`, where `G` is the largest energy increment any
/// server can charge. Each unit sent then adds more than `G` whatever the
/// state, so an optimal allocation discards nothing. This needs
/// `u_p > c T` for every job.
pub fn speed_scaling(cfg: &SpeedScalingConfig) -> Result<Instance, AdapterError> {
    if cfg.powers.is_empty() {
        return Err(crate::error::ModelError::Instance("need at least one server".into()).into());
    }
    let n: u32 = cfg.jobs.iter().map(|j| j.size).sum();
    for (s, g) in cfg.powers.iter().enumerate() {
        if let Some(v) = g.check_shape(Shape::Convex, u64::from(n.max(2))).first() {
            return Err(AdapterError::Power { server: s, message: format!("power function must be convex with g(0) = 0: {v}") });
        }
    }
    let max_dg = cfg.powers.iter().map(|g| g.delta(u64::from(n.saturating_sub(1)))).max().expect("non-empty");
    let mut inst = Instance {
        label: "speed-scaling".into(),
        horizon: cfg.horizon,
        servers: cfg.powers.len() as u32,
        energy: cfg.powers.clone(),
        packets: Vec::new(),
    };
    for (i, job) in cfg.jobs.iter().enumerate() {
        let id = i as u32 + 1;
        if job.size == 0 {
            return Err(crate::error::ModelError::Packet { packet: id, message: "job size must be positive".into() }.into());
        }
        let mut p = Packet::new(id, job.arrival, job.size, CostFamily::linear(job.unit_value.clone()), CostFamily::linear(cfg.flow_weight.clone()));
        if cfg.mandatory {
            let margin = &job.unit_value - &cfg.flow_weight * int(i64::from(cfg.horizon));
            if !margin.is_positive() {
                return Err(crate::error::ModelError::Packet {
                    packet: id,
                    message: "mandatory mode needs unit value above flow weight times horizon".into(),
                }
                .into());
            }
            p.weight = (&max_dg / margin).floor() + Value::one();
        }
        inst.packets.push(p);
    }
    inst.packets.sort_by_key(|p| (p.arrival, p.id));
    validated(inst)
}

// ---------------------------------------------------------------------------
// Remote sampling

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Fidelity {
    /// `2^k (1 - 2^{-l})` for a `k`-sub-packet sample: each extra sub-packet
    /// halves the remaining error.
    Halving,
    /// Explicit concave table shared by every sample; its length minus one
    /// fixes the sub-packet count.
    Table { table: Vec<i64> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub sources: u32,
    /// Slots between consecutive samples of a source.
    pub period: Slot,
    /// Each sample may arrive up to this many slots late.
    pub jitter: Slot,
    pub horizon: Slot,
    /// Largest sub-packet count per sample (ignored for tables).
    pub max_k: u32,
    pub fidelity: Fidelity,
    pub seed: u64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams { sources: 2, period: 2, jitter: 1, horizon: 5, max_k: 3, fidelity: Fidelity::Halving, seed: 0 }
    }
}

/// Multi-source sampling instances: each source emits a sample every
/// `period` slots from a random phase, fidelity grows concavely in the
/// sub-packets delivered, staleness costs a convex delay and all sources
/// share the convex energy `k^2`. The Wiener process and random channel are
/// not simulated.
pub fn remote_sampling_family(params: &SamplingParams) -> Result<Instance, AdapterError> {
    if params.period == 0 || params.max_k == 0 {
        return Err(crate::error::ModelError::Instance("period and max_k must be positive".into()).into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut samples = Vec::new();
    for s in 0..params.sources {
        let mut t = rng.random_range(0..params.period);
        while t <= params.horizon {
            let a = (t + rng.random_range(0..=params.jitter)).min(params.horizon);
            samples.push((a, s));
            t += params.period;
        }
    }
    samples.sort();
    let mut inst = Instance::new(format!("sampling-seed{}", params.seed), params.horizon, CostFamily::Power { coef: int(1), exponent: 2 });
    for (i, &(a, _)) in samples.iter().enumerate() {
        let (k, d) = match &params.fidelity {
            Fidelity::Halving => {
                let k = rng.random_range(1..=params.max_k);
                (k, CostFamily::Exponential { scale: -value::pow(&int(2), u64::from(k)), base: ratio(1, 2) })
            }
            Fidelity::Table { table } => {
                if table.len() < 2 {
                    return Err(crate::error::ModelError::Instance("fidelity table needs at least two entries".into()).into());
                }
                (table.len() as u32 - 1, CostFamily::table(table))
            }
        };
        let delay = if rng.random_bool(0.5) {
            CostFamily::linear(int(rng.random_range(0..=1)))
        } else {
            CostFamily::Power { coef: ratio(1, 2), exponent: 2 }
        };
        inst.packets.push(Packet::new(i as u32 + 1, a, k, d, delay));
    }
    validated(inst)
}
