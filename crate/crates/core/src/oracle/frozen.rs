//! Exhaustive maximization of `Y` over the locking-free instance.
//!
//! The search runs on tables of term values and energy increments rather
//! than on [`LoadState`](crate::valuation::LoadState); when every table entry
//! scaled to a common denominator fits comfortably in `i128` it runs on
//! integers, otherwise on exact rationals. The value of the allocation found
//! is recomputed with the valuation code before it is returned.

use std::ops::{Add, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::{energies_convex, sequences, Counter, YOptResult};
use crate::error::OracleError;
use crate::instance::{Allocation, BinId, Instance, Resource, Slot, SubpacketRef};
use crate::reduction::build_ism;
use crate::validate::validate_instance;
use crate::value::Value;

trait Num: Clone + Ord + Zero + Add<Output = Self> + Sub<Output = Self> {}
impl Num for i128 {}
impl Num for Value {}

struct Tables<N> {
    /// `term[pos][n][d - A_p]` for `d` in `A_p..=max(T, A_p)`.
    term: Vec<Vec<Vec<N>>>,
    /// `dg[s][l] = g_s(l + 1) - g_s(l)`.
    dg: Vec<Vec<N>>,
}

#[derive(Clone)]
struct State {
    sent: Vec<u32>,
    last: Vec<Option<Slot>>,
    loads: Vec<u32>,
}

struct Ctx<'a> {
    inst: &'a Instance,
    servers: usize,
}

impl Ctx<'_> {
    fn last_slot(&self, st: &State, pos: usize) -> Slot {
        let a = self.inst.packets[pos].arrival;
        st.last[pos].map_or(a, |d| d.max(a))
    }

    fn mu<N: Num>(&self, tab: &Tables<N>, st: &State, res: &Resource, b: BinId) -> N {
        let BinId::Slot { slot, server } = b else { return N::zero() };
        if slot < res.arrival {
            return N::zero();
        }
        let pos = res.packet_pos;
        let a = self.inst.packets[pos].arrival;
        let n = st.sent[pos] as usize;
        let d = self.last_slot(st, pos);
        let after = tab.term[pos][n + 1][(d.max(slot) - a) as usize].clone();
        let before = tab.term[pos][n][(d - a) as usize].clone();
        let load = st.loads[slot as usize * self.servers + server as usize] as usize;
        after - before - tab.dg[server as usize][load].clone()
    }

    fn apply(&self, st: &mut State, pos: usize, b: BinId) {
        if let BinId::Slot { slot, server } = b {
            st.loads[slot as usize * self.servers + server as usize] += 1;
            st.sent[pos] += 1;
            st.last[pos] = Some(st.last[pos].map_or(slot, |d| d.max(slot)));
        }
    }
}

/// Distinct orderings of a sorted sequence, in lexicographic order.
fn distinct_orderings(sorted: &[BinId]) -> Vec<Vec<BinId>> {
    let mut cur = sorted.to_vec();
    let mut out = vec![cur.clone()];
    loop {
        let Some(i) = (1..cur.len()).rev().find(|&i| cur[i - 1] < cur[i]) else { return out };
        let j = (i..cur.len()).rev().find(|&j| cur[i - 1] < cur[j]).expect("exists");
        cur.swap(i - 1, j);
        cur[i..].reverse();
        out.push(cur.clone());
    }
}

struct Search<'a, N> {
    ctx: Ctx<'a>,
    tab: Tables<N>,
    /// The first resource of each packet, in arrival order. A packet's
    /// sub-packets are consecutive in `R_on`.
    blocks: Vec<Resource>,
    /// Per block: each multiset of bins with its distinct orderings.
    options: Vec<Vec<Vec<Vec<BinId>>>>,
    /// Static bound on what blocks `i..` can add (convex energies only).
    rest: Option<Vec<N>>,
    /// `rows[pos][j][t]`: bound on the term change of the `(j+1)`-th
    /// sub-packet of a block placed in slot `t`.
    rows: Vec<Vec<Vec<N>>>,
    counter: Counter,
    best: N,
    found: Option<Vec<Vec<BinId>>>,
}

impl<N: Num> Search<'_, N> {
    /// Value of one ordering of a block.
    fn block_value(&self, st: &State, res: &Resource, order: &[BinId]) -> N {
        let mut st = st.clone();
        let mut v = N::zero();
        for &b in order {
            v = v + self.ctx.mu(&self.tab, &st, res, b);
            self.ctx.apply(&mut st, res.packet_pos, b);
        }
        v
    }

    fn best_ordering(&self, st: &State, res: &Resource, orderings: &[Vec<BinId>]) -> (N, usize) {
        let mut best: Option<(N, usize)> = None;
        for (k, o) in orderings.iter().enumerate() {
            let v = self.block_value(st, res, o);
            if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                best = Some((v, k));
            }
        }
        best.expect("at least one ordering")
    }

    /// Each remaining sub-packet takes its best term change minus the energy
    /// increment its bin charges now; loads only grow and increments with
    /// them.
    fn load_bound(&self, i: usize, st: &State) -> N {
        let inst = self.ctx.inst;
        let mut total = N::zero();
        for res in &self.blocks[i..] {
            for row in &self.rows[res.packet_pos] {
                let mut best = N::zero();
                for slot in res.arrival..=inst.horizon {
                    for server in 0..self.ctx.servers {
                        let load = st.loads[slot as usize * self.ctx.servers + server] as usize;
                        let v = row[slot as usize].clone() - self.tab.dg[server][load].clone();
                        if v > best {
                            best = v;
                        }
                    }
                }
                total = total + best;
            }
        }
        total
    }

    fn dfs(&mut self, i: usize, st: &State, cur: N, chosen: &mut Vec<Vec<BinId>>) -> Result<(), OracleError> {
        if i == self.blocks.len() {
            if cur > self.best {
                self.best = cur;
                self.found = Some(chosen.clone());
            }
            return Ok(());
        }
        if let Some(rest) = &self.rest {
            if cur.clone() + rest[i].clone() <= self.best || cur.clone() + self.load_bound(i, st) <= self.best {
                return Ok(());
            }
        }
        let res = self.blocks[i];
        for o in 0..self.options[i].len() {
            self.counter.tick()?;
            let (v, k) = self.best_ordering(st, &res, &self.options[i][o]);
            let order = self.options[i][o][k].clone();
            let mut next = st.clone();
            for &b in &order {
                self.ctx.apply(&mut next, res.packet_pos, b);
            }
            chosen.push(order);
            self.dfs(i + 1, &next, cur.clone() + v, chosen)?;
            chosen.pop();
        }
        Ok(())
    }
}

type Placement = Vec<(SubpacketRef, BinId)>;

fn run<N: Num>(
    inst: &Instance,
    tab: Tables<N>,
    floor: N,
    budget: u64,
    exact_rows: bool,
) -> Result<(Option<Placement>, u64), OracleError> {
    let ctx = Ctx { inst, servers: inst.servers as usize };
    let bins: Vec<BinId> = inst.regular_bins().chain([BinId::Discard]).collect();
    let blocks: Vec<Resource> = inst.resources().into_iter().filter(|r| r.r.index == 1).collect();
    let options: Vec<Vec<Vec<Vec<BinId>>>> = blocks
        .iter()
        .map(|res| sequences(&bins, inst.packets[res.packet_pos].subpackets).iter().map(|s| distinct_orderings(s)).collect())
        .collect();
    // Term change of the (j+1)-th sub-packet in slot t, over every current
    // last slot and every sent count m it may see. In general that is any
    // m <= j since earlier sub-packets of the block may have been discarded.
    // When the instance satisfies the shape assumptions, a placement in a bin
    // that locked before the arrival is never better than discarding, and
    // without such placements a block's value does not depend on the order
    // of its sub-packets, so m = j suffices.
    let rows: Vec<Vec<Vec<N>>> = inst
        .packets
        .iter()
        .enumerate()
        .map(|(pos, p)| {
            let span = inst.horizon.max(p.arrival) - p.arrival;
            let raw: Vec<Vec<N>> = (0..p.subpackets as usize)
                .map(|m| {
                    (0..=inst.horizon)
                        .map(|t| {
                            (0..=span)
                                .map(|dd| {
                                    let after = (p.arrival + dd).max(t) - p.arrival;
                                    tab.term[pos][m + 1][after as usize].clone() - tab.term[pos][m][dd as usize].clone()
                                })
                                .max()
                                .expect("non-empty")
                        })
                        .collect()
                })
                .collect();
            if exact_rows {
                return raw;
            }
            (0..raw.len())
                .map(|j| (0..raw[j].len()).map(|t| (0..=j).map(|m| raw[m][t].clone()).max().expect("non-empty")).collect())
                .collect()
        })
        .collect();
    let mut search = Search {
        ctx,
        tab,
        blocks,
        options,
        rest: None,
        rows,
        counter: Counter { nodes: 0, budget },
        best: floor,
        found: None,
    };
    // With convex energies a block only loses value as loads grow, so its
    // best value on empty bins bounds what it can add later.
    if energies_convex(inst, inst.total_subpackets()) {
        let empty = State {
            sent: vec![0; inst.packets.len()],
            last: vec![None; inst.packets.len()],
            loads: vec![0; (inst.horizon as usize + 1) * inst.servers as usize],
        };
        let alone: Vec<N> = (0..search.blocks.len())
            .map(|i| {
                let res = search.blocks[i];
                let best = search.options[i]
                    .iter()
                    .map(|o| search.best_ordering(&empty, &res, o).0)
                    .max()
                    .unwrap_or_else(N::zero);
                best.max(N::zero())
            })
            .collect();
        let mut rest = vec![N::zero(); alone.len() + 1];
        for i in (0..alone.len()).rev() {
            rest[i] = rest[i + 1].clone() + alone[i].clone();
        }
        search.rest = Some(rest);
    }
    let start = State {
        sent: vec![0; inst.packets.len()],
        last: vec![None; inst.packets.len()],
        loads: vec![0; (inst.horizon as usize + 1) * inst.servers as usize],
    };
    search.dfs(0, &start, N::zero(), &mut Vec::new())?;
    let found = search.found.take().map(|orders| {
        search
            .blocks
            .iter()
            .zip(orders)
            .flat_map(|(res, order)| {
                let packet = res.r.packet;
                order.into_iter().enumerate().map(move |(j, b)| (SubpacketRef { packet, index: j as u32 + 1 }, b))
            })
            .collect()
    });
    Ok((found, search.counter.nodes))
}

fn rational_tables(inst: &Instance) -> Tables<Value> {
    let term = inst
        .packets
        .iter()
        .map(|p| {
            let span = inst.horizon.max(p.arrival) - p.arrival;
            (0..=p.subpackets).map(|n| (0..=span).map(|dd| p.term(n, p.arrival + dd)).collect()).collect()
        })
        .collect();
    let n = inst.total_subpackets();
    let dg = (0..inst.servers).map(|s| (0..=n).map(|l| inst.energy_delta(s, l)).collect()).collect();
    Tables { term, dg }
}

/// Scales every entry by the common denominator; `None` if any scaled entry
/// is too large to sum safely in `i128`.
fn integer_tables(t: &Tables<Value>) -> Option<Tables<i128>> {
    let all = t.term.iter().flatten().flatten().chain(t.dg.iter().flatten());
    let mut l = BigInt::one();
    for v in all {
        l = l.lcm(v.denom());
    }
    let limit = BigInt::one() << 96;
    let conv = |v: &Value| -> Option<i128> {
        let s = v.numer() * (&l / v.denom());
        if s.abs() > limit {
            return None;
        }
        s.to_i128()
    };
    let term = t
        .term
        .iter()
        .map(|p| p.iter().map(|row| row.iter().map(conv).collect::<Option<Vec<_>>>()).collect::<Option<Vec<_>>>())
        .collect::<Option<Vec<_>>>()?;
    let dg = t.dg.iter().map(|row| row.iter().map(conv).collect::<Option<Vec<_>>>()).collect::<Option<Vec<_>>>()?;
    Some(Tables { term, dg })
}

/// Maximum of `Y` (the frozen increments telescoped in arrival order) over
/// every allocation, with no locking: any resource may take any bin, bins
/// that locked before it arrived simply add nothing, and sub-packets of a
/// packet may go in any order. `floor` is a known allocation whose value the
/// search must strictly beat to replace it.
///
/// The state after a packet's sub-packets depends only on the multiset of
/// their bins, so the search branches on multisets and takes the best
/// ordering within each; this loses nothing.
pub fn max_y_bruteforce(inst: &Instance, budget: u64, floor: (Allocation, Value)) -> Result<YOptResult, OracleError> {
    let (floor_alloc, floor_value) = floor;
    let exact_rows = validate_instance(inst).is_valid();
    let rt = rational_tables(inst);
    let (found, nodes) = match integer_tables(&rt) {
        Some(it) => {
            let mut l = BigInt::one();
            for v in rt.term.iter().flatten().flatten().chain(rt.dg.iter().flatten()) {
                l = l.lcm(v.denom());
            }
            let scaled = (&floor_value * Value::from_integer(l)).floor().to_integer();
            // A floor that is not a multiple of 1/l is rounded down, which
            // only weakens pruning by less than one unit.
            let floor_int = scaled.to_i128().filter(|x| x.unsigned_abs() < (1u128 << 100));
            match floor_int {
                Some(f) => run(inst, it, f, budget, exact_rows)?,
                None => run(inst, rt, floor_value.clone(), budget, exact_rows)?,
            }
        }
        None => run(inst, rt, floor_value.clone(), budget, exact_rows)?,
    };
    let Some(pairs) = found else {
        return Ok(YOptResult { allocation: floor_alloc, value: floor_value, nodes });
    };
    let allocation: Allocation = pairs.into_iter().collect();
    let value = build_ism(inst).y_value(&allocation).expect("search uses known bins");
    if value <= floor_value {
        // Rounding the floor down can admit an allocation that only ties it.
        return Ok(YOptResult { allocation: floor_alloc, value: floor_value, nodes });
    }
    Ok(YOptResult { allocation, value, nodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostFamily;
    use crate::generate::{generate, GenParams};
    use crate::instance::Packet;
    use crate::value::int;
    use proptest::prelude::*;

    /// Maximum of `Y` over every allocation of every resource to every bin.
    fn enumerate_y(inst: &Instance) -> Value {
        let ism = build_ism(inst);
        let res = inst.resources();
        let mut best = Value::zero();
        let mut choice = vec![0usize; res.len()];
        loop {
            let a: Allocation = res.iter().zip(&choice).map(|(r, &c)| (r.r, ism.bins[c])).collect();
            best = best.max(ism.y_value(&a).unwrap());
            let mut i = 0;
            loop {
                if i == res.len() {
                    return best;
                }
                choice[i] += 1;
                if choice[i] < ism.bins.len() {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
        }
    }

    fn zero_floor() -> (Allocation, Value) {
        (Allocation::new(), Value::zero())
    }

    #[test]
    fn orderings_are_distinct_and_complete() {
        let a = BinId::slot(0);
        let b = BinId::slot(1);
        assert_eq!(distinct_orderings(&[a, a, b]).len(), 3);
        assert_eq!(distinct_orderings(&[a, b, BinId::Discard]).len(), 6);
    }

    #[test]
    fn out_of_order_labelling_can_win() {
        // The second sub-packet in a later slot gains nothing from D but the
        // first is worth more in the early slot.
        let inst = Instance::new("y", 1, CostFamily::zero()).with_packet(Packet::new(
            1,
            0,
            2,
            CostFamily::table(&[0, 6, 7]),
            CostFamily::linear(int(2)),
        ));
        let r = max_y_bruteforce(&inst, 1_000_000, zero_floor()).unwrap();
        assert_eq!(r.value, enumerate_y(&inst));
    }

    #[test]
    fn floor_is_kept_when_unbeaten() {
        let inst = generate(&GenParams { packets: 2, max_k: 1, horizon: 1, seed: 3, ..GenParams::default() }).unwrap();
        let opt = enumerate_y(&inst);
        let r = max_y_bruteforce(&inst, 1_000_000, (Allocation::new(), opt.clone())).unwrap();
        assert_eq!(r.value, opt);
        assert!(r.allocation.is_empty());
    }

    fn arb_table(len: usize, convex: bool) -> impl Strategy<Value = Vec<i64>> {
        prop::collection::vec(0i64..5, len).prop_map(move |steps| {
            let mut t = vec![0i64];
            let mut inc = 0;
            for s in steps {
                inc = if convex { inc + s } else { s };
                t.push(t.last().unwrap() + inc);
            }
            t
        })
    }

    /// Small instances that need not satisfy the shape assumptions: utility
    /// tables may be convex, energy tables arbitrary non-decreasing.
    fn arb_instance() -> impl Strategy<Value = Instance> {
        let packet = (0u32..=2, 1u32..=2, 0i64..3).prop_flat_map(|(a, k, slope)| {
            (Just(a), Just(k), Just(slope), arb_table(k as usize, false))
        });
        (prop::collection::vec(packet, 1..=3), any::<bool>()).prop_flat_map(|(ps, convex)| {
            let total: usize = ps.iter().map(|p| p.1 as usize).sum();
            (Just(ps), arb_table(total + 1, convex))
        })
        .prop_map(|(ps, energy)| {
            let mut inst = Instance::new("arb", 2, CostFamily::table(&energy));
            for (i, (a, k, slope, d)) in ps.into_iter().enumerate() {
                inst.packets.push(Packet::new(i as u32 + 1, a, k, CostFamily::table(&d), CostFamily::linear(int(slope))));
            }
            inst
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn pruned_search_matches_enumeration(inst in arb_instance()) {
            let r = max_y_bruteforce(&inst, 10_000_000, zero_floor()).unwrap();
            prop_assert_eq!(&r.value, &enumerate_y(&inst));
            prop_assert_eq!(build_ism(&inst).y_value(&r.allocation).unwrap(), r.value);
        }

        #[test]
        fn generated_instances_match_enumeration(seed in 0u64..10_000) {
            let inst = generate(&GenParams { packets: 3, max_k: 2, horizon: 2, seed, ..GenParams::default() }).unwrap();
            let r = max_y_bruteforce(&inst, 10_000_000, zero_floor()).unwrap();
            prop_assert_eq!(r.value, enumerate_y(&inst));
        }
    }
}
