//! Seeded instance generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::CostFamily;
use crate::error::ModelError;
use crate::instance::{Instance, Packet, Slot};
use crate::matching::BipartiteInstance;
use crate::validate::validate_instance;
use crate::value::{int, ratio};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Random,
    /// Low-value packets with slack arrive first, high-value packets with
    /// tight deadlines arrive late into the same slots.
    AdversarialLock,
    /// Most packets arrive in a single slot under steep convex energy.
    AdversarialBurst,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "random" => Ok(Mode::Random),
            "adversarial-lock" => Ok(Mode::AdversarialLock),
            "adversarial-burst" => Ok(Mode::AdversarialBurst),
            _ => Err(format!("unknown mode {s:?} (random, adversarial-lock, adversarial-burst)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenParams {
    pub packets: u32,
    /// Largest sub-packet count; 1 gives binary instances.
    pub max_k: u32,
    pub horizon: Slot,
    pub servers: u32,
    /// Largest first utility increment `D(1)`.
    pub max_value: i64,
    /// Largest slope of the delay and energy cost families.
    pub max_slope: i64,
    pub mode: Mode,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams { packets: 4, max_k: 3, horizon: 4, servers: 1, max_value: 12, max_slope: 3, mode: Mode::Random, seed: 0 }
    }
}

impl GenParams {
    /// Size limits under which the exhaustive oracle finishes quickly.
    pub fn check_desk_scale(&self) -> Result<(), ModelError> {
        if self.packets > 6 || self.max_k > 3 || self.horizon > 6 || self.servers > 2 {
            return Err(ModelError::Instance(format!(
                "exact oracle needs at most 6 packets, 3 sub-packets, horizon 6 and 2 servers (got {}, {}, {}, {})",
                self.packets, self.max_k, self.horizon, self.servers
            )));
        }
        Ok(())
    }
}

/// Non-decreasing utility table with non-increasing increments.
fn concave_table(rng: &mut ChaCha8Rng, k: u32, first: i64) -> CostFamily {
    let mut t = vec![0i64];
    let mut inc = first;
    for _ in 0..k {
        t.push(t.last().unwrap() + inc);
        inc = rng.random_range(0..=inc);
    }
    CostFamily::table(&t)
}

/// Convex table vanishing at 0 with `len` increments.
fn convex_table(rng: &mut ChaCha8Rng, len: usize, max_step: i64) -> CostFamily {
    let mut t = vec![0i64];
    let mut inc = rng.random_range(0..=max_step);
    for _ in 0..len {
        t.push(t.last().unwrap() + inc);
        inc += rng.random_range(0..=max_step);
    }
    CostFamily::table(&t)
}

fn delay_family(rng: &mut ChaCha8Rng, max_slope: i64, horizon: Slot) -> CostFamily {
    match rng.random_range(0..4) {
        0 | 1 => CostFamily::linear(int(rng.random_range(0..=max_slope))),
        2 => CostFamily::Power { coef: ratio(rng.random_range(1..=2), 2), exponent: 2 },
        _ => convex_table(rng, horizon as usize + 1, max_slope.max(1) / 2 + 1),
    }
}

fn energy_family(rng: &mut ChaCha8Rng, max_slope: i64, n: u32) -> CostFamily {
    match rng.random_range(0..4) {
        0 => CostFamily::linear(int(rng.random_range(0..=max_slope))),
        1 => CostFamily::Power { coef: int(1), exponent: 2 },
        2 => CostFamily::Exponential { scale: int(1), base: int(2) },
        _ => convex_table(rng, n.max(2) as usize, max_slope.max(1)),
    }
}

/// A seeded instance. The same parameters always give the same instance.
pub fn generate(params: &GenParams) -> Result<Instance, ModelError> {
    if params.servers == 0 || params.max_k == 0 || params.max_value < 1 || params.max_slope < 0 {
        return Err(ModelError::Instance("servers, max_k and max_value must be positive, max_slope non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let h = params.horizon;
    let n = params.packets;
    let mut packets = Vec::new();
    let mut total = 0;
    for i in 0..n {
        let k = rng.random_range(1..=params.max_k);
        total += k;
        let (arrival, first, deadline) = match params.mode {
            Mode::Random => {
                let a = rng.random_range(0..=h);
                let d = rng.random_bool(0.25).then(|| (a + rng.random_range(0..=2)).min(h));
                (a, rng.random_range(1..=params.max_value), d)
            }
            Mode::AdversarialLock => {
                if i < n / 2 {
                    (rng.random_range(0..=h / 2), rng.random_range(1..=params.max_value / 3 + 1), None)
                } else {
                    let a = rng.random_range(h / 2..=h);
                    (a, params.max_value + rng.random_range(0..=params.max_value), Some(a))
                }
            }
            Mode::AdversarialBurst => {
                let a = if rng.random_bool(0.75) { h / 2 } else { rng.random_range(0..=h) };
                (a, rng.random_range(1..=params.max_value), None)
            }
        };
        let distortion = concave_table(&mut rng, k, first);
        let delay_cost = delay_family(&mut rng, params.max_slope, h);
        let mut p = Packet::new(i + 1, arrival, k, distortion, delay_cost);
        p.deadline = deadline;
        if rng.random_bool(0.2) {
            p.weight = ratio(rng.random_range(1..=4), 2);
        }
        packets.push(p);
    }
    let energy = (0..params.servers)
        .map(|_| match params.mode {
            Mode::AdversarialBurst => CostFamily::Power { coef: int(1), exponent: 2 },
            _ => energy_family(&mut rng, params.max_slope, total),
        })
        .collect();
    let mode = serde_json::to_value(params.mode).expect("mode serializes");
    let inst = Instance {
        label: format!("{}-seed{}", mode.as_str().unwrap_or("gen"), params.seed),
        horizon: h,
        servers: params.servers,
        energy,
        packets,
    };
    inst.check_structure()?;
    let report = validate_instance(&inst);
    if !report.is_valid() {
        return Err(ModelError::Instance(format!("generated instance fails validation: {report}")));
    }
    Ok(inst)
}

/// The lock-graph family where Algorithm 1 loses almost half: `a1` arrives
/// at 0 and slightly prefers `b2` (locks at 1) over `b1` (locks at 0), so
/// `b1` locks empty; `a2` then arrives at 1 wanting only `b2`, slightly more.
/// Online gets `w + 2 eps`, offline `2w + 2 eps`.
pub fn adversarial_lock_graph(w: i64, eps: i64) -> BipartiteInstance {
    let mut g = BipartiteInstance::new();
    let a1 = g.add_left("a1", 0);
    let a2 = g.add_left("a2", 1);
    let b1 = g.add_right("b1", 0);
    let b2 = g.add_right("b2", 1);
    g.add_edge(a1, b1, int(w)).expect("non-negative");
    g.add_edge(a1, b2, int(w + eps)).expect("non-negative");
    g.add_edge(a2, b2, int(w + 2 * eps)).expect("non-negative");
    g
}

/// A random lock graph: left nodes arrive and right nodes lock at random
/// slots, edges appear with probability `density` and integer weights up to
/// `max_weight`.
pub fn random_lock_graph(seed: u64, lefts: usize, rights: usize, horizon: Slot, density: f64, max_weight: i64) -> BipartiteInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = BipartiteInstance::new();
    for i in 0..lefts {
        g.add_left(format!("a{}", i + 1), rng.random_range(0..=horizon));
    }
    for j in 0..rights {
        g.add_right(format!("b{}", j + 1), rng.random_range(0..=horizon));
    }
    for i in 0..lefts {
        for j in 0..rights {
            if rng.random_bool(density) {
                g.add_edge(i, j, int(rng.random_range(0..=max_weight))).expect("non-negative");
            }
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::{event_streams, offline_matching, run_algorithm1};

    #[test]
    fn same_seed_same_instance() {
        let p = GenParams { seed: 42, ..GenParams::default() };
        assert_eq!(generate(&p).unwrap().to_json(), generate(&p).unwrap().to_json());
        let q = GenParams { seed: 43, ..p.clone() };
        assert_ne!(generate(&p).unwrap(), generate(&q).unwrap());
    }

    #[test]
    fn zero_packets_is_empty() {
        let inst = generate(&GenParams { packets: 0, ..GenParams::default() }).unwrap();
        assert!(inst.packets.is_empty());
    }

    #[test]
    fn every_mode_is_valid() {
        for mode in [Mode::Random, Mode::AdversarialLock, Mode::AdversarialBurst] {
            for seed in 0..50 {
                let inst = generate(&GenParams { mode, seed, servers: 2, ..GenParams::default() }).unwrap();
                assert!(validate_instance(&inst).is_valid());
            }
        }
    }

    #[test]
    fn binary_when_max_k_is_one() {
        let inst = generate(&GenParams { max_k: 1, packets: 6, ..GenParams::default() }).unwrap();
        assert!(inst.is_binary());
    }

    #[test]
    fn lock_graph_probe_is_near_half() {
        let g = adversarial_lock_graph(100, 1);
        let (a, l) = event_streams(&g);
        let run = run_algorithm1(&g, &a, &l).unwrap();
        assert_eq!(run.weight, int(102));
        assert_eq!(offline_matching(&g).weight, int(202));
    }

    #[test]
    fn mode_names_parse() {
        assert_eq!("adversarial-burst".parse::<Mode>().unwrap(), Mode::AdversarialBurst);
        assert!("nope".parse::<Mode>().is_err());
    }
}
