mod common;

use aqi_core::cost::Shape;
use aqi_core::generate::{generate, random_lock_graph, GenParams, Mode};
use aqi_core::greedy::run_algorithm2;
use aqi_core::matching::{
    arrival_inequality_violations, event_streams, expand_binary, lemma1_violations, offline_matching, run_algorithm1, EventKind,
};
use aqi_core::oracle::{offline_opt_bruteforce, DEFAULT_BUDGET};
use aqi_core::reduction::{build_ism, verify_lemma3, verify_theorem2_chain};
use aqi_core::valuation::{evaluate_z, increment_rho};
use aqi_core::value::int;
use aqi_core::{Allocation, BinId, Instance};
use common::{enumerate_opt, z_reference};
use num_traits::Zero;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mode() -> impl Strategy<Value = Mode> {
    prop_oneof![Just(Mode::Random), Just(Mode::AdversarialLock), Just(Mode::AdversarialBurst)]
}

fn instance(max_packets: u32, max_k: u32, max_horizon: u32) -> impl Strategy<Value = Instance> {
    (0..=max_packets, 1..=max_k, 1..=max_horizon, 1u32..=2, mode(), any::<u64>()).prop_map(
        |(packets, max_k, horizon, servers, mode, seed)| {
            generate(&GenParams { packets, max_k, horizon, servers, mode, seed, ..GenParams::default() }).unwrap()
        },
    )
}

fn random_allocation(inst: &Instance, rng: &mut ChaCha8Rng) -> Allocation {
    let bins: Vec<BinId> = inst.regular_bins().chain([BinId::Discard]).collect();
    let mut a = Allocation::new();
    for r in inst.resources() {
        if rng.random_bool(0.6) {
            a.insert(r.r, bins[rng.random_range(0..bins.len())]).unwrap();
        }
    }
    a
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn json_round_trip_is_identity(inst in instance(6, 3, 6)) {
        let text = inst.to_json();
        let back = Instance::from_json(&text).unwrap();
        prop_assert_eq!(&back, &inst);
        prop_assert_eq!(back.to_json(), text);
    }

    #[test]
    fn accepted_cost_functions_have_their_shapes(inst in instance(6, 3, 6)) {
        for p in &inst.packets {
            prop_assert!(p.distortion.check_shape(Shape::Concave, u64::from(p.subpackets)).is_empty());
            prop_assert!(p.delay_cost.check_shape(Shape::Convex, u64::from(inst.horizon) + 1).is_empty());
        }
        for g in &inst.energy {
            prop_assert!(g.check_shape(Shape::Convex, u64::from(inst.total_subpackets()) + 1).is_empty());
        }
    }

    #[test]
    fn increments_are_differences_of_z(inst in instance(5, 3, 5), seed in any::<u64>()) {
        prop_assume!(!inst.packets.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let res = inst.resources();
        let bins: Vec<BinId> = inst.regular_bins().chain([BinId::Discard]).collect();
        for _ in 0..10 {
            let mut s = random_allocation(&inst, &mut rng);
            let r = res[rng.random_range(0..res.len())].r;
            s.remove(&r);
            let b = bins[rng.random_range(0..bins.len())];
            let rho = increment_rho(&inst, &s, r, b).unwrap();
            let before = z_reference(&inst, &s);
            s.insert(r, b).unwrap();
            prop_assert_eq!(rho, z_reference(&inst, &s) - before);
        }
    }

    #[test]
    fn any_build_up_telescopes(inst in instance(5, 3, 5), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = random_allocation(&inst, &mut rng);
        let mut order: Vec<_> = target.iter().collect();
        order.shuffle(&mut rng);
        let mut s = Allocation::new();
        let mut sum = aqi_core::value::zero();
        for (r, b) in order {
            sum += increment_rho(&inst, &s, r, b).unwrap();
            s.insert(r, b).unwrap();
        }
        prop_assert_eq!(&sum, &evaluate_z(&inst, &target).unwrap().total);
        prop_assert_eq!(sum, z_reference(&inst, &target));
    }

    #[test]
    fn z_ignores_packet_listing_order(inst in instance(5, 3, 5), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_allocation(&inst, &mut rng);
        let mut shuffled = inst.clone();
        shuffled.packets.shuffle(&mut rng);
        prop_assert_eq!(evaluate_z(&inst, &a).unwrap().total, evaluate_z(&shuffled, &a).unwrap().total);
        prop_assert_eq!(run_algorithm2(&inst).allocation, run_algorithm2(&shuffled).allocation);
    }

    #[test]
    fn greedy_steps_are_non_negative_open_and_telescoping(inst in instance(6, 3, 6)) {
        let run = run_algorithm2(&inst);
        let mut replay = Allocation::new();
        let mut sum = aqi_core::value::zero();
        for s in &run.steps {
            prop_assert!(s.rho >= aqi_core::value::zero());
            prop_assert!(s.chosen_bin.open_at(s.arrival));
            let r = aqi_core::SubpacketRef { packet: s.packet, index: s.index };
            sum += increment_rho(&inst, &replay, r, s.chosen_bin).unwrap();
            replay.insert(r, s.chosen_bin).unwrap();
        }
        prop_assert_eq!(&run.telescoped(), &run.valuation.total);
        prop_assert_eq!(&sum, &run.valuation.total);
        // greedy may hand a later index an earlier slot; relabelling fixes
        // the order without moving any value
        let ordered = run.allocation.in_order();
        prop_assert!(ordered.check(&inst).is_ok());
        prop_assert_eq!(z_reference(&inst, &ordered), run.valuation.total.clone());
    }

    #[test]
    fn greedy_matches_frozen_greedy(inst in instance(6, 3, 6)) {
        let r = verify_lemma3(&inst, false);
        prop_assert!(r.holds(), "{:?}", r);
    }

    #[test]
    fn frozen_increments_vanish_on_locked_bins(inst in instance(4, 3, 5), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ism = build_ism(&inst);
        let a = random_allocation(&inst, &mut rng);
        for res in &ism.resources {
            if a.contains(&res.r) {
                continue;
            }
            for &b in &ism.bins {
                if !b.open_at(res.arrival) {
                    prop_assert!(ism.mu(&a, res.r, b).unwrap().is_zero());
                }
            }
        }
    }

    #[test]
    fn feasible_allocations_have_y_equal_z(inst in instance(5, 3, 5)) {
        let g = run_algorithm2(&inst);
        prop_assert_eq!(build_ism(&inst).y_value(&g.allocation).unwrap(), g.valuation.total);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn online_matching_invariants(seed in any::<u64>(), lefts in 1usize..6, rights in 1usize..6, horizon in 0u32..4) {
        let g = random_lock_graph(seed, lefts, rights, horizon, 0.6, 9);
        let (a, l) = event_streams(&g);
        let run = run_algorithm1(&g, &a, &l).unwrap();
        prop_assert!(lemma1_violations(&run.trace).is_empty());
        prop_assert!(arrival_inequality_violations(&g, &run.trace).is_empty());
        let opt = offline_matching(&g).weight;
        prop_assert!(&run.weight * int(2) >= opt);
        // perm is a matching; a locked edge sits in temp just before its lock
        // and never reappears, since temp only spans free nodes
        let mut ls: Vec<usize> = run.perm.iter().map(|e| e.0).collect();
        let mut rs: Vec<usize> = run.perm.iter().map(|e| e.1).collect();
        ls.sort();
        ls.dedup();
        rs.sort();
        rs.dedup();
        prop_assert_eq!(ls.len(), run.perm.len());
        prop_assert_eq!(rs.len(), run.perm.len());
        let mut locked: Vec<(usize, usize)> = Vec::new();
        let mut perm_weight = aqi_core::value::zero();
        let mut prev_temp: Vec<(usize, usize)> = Vec::new();
        for e in &run.trace.events {
            if let EventKind::Lock { rights } = &e.kind {
                for p in run.perm.iter().filter(|p| rights.contains(&p.1)) {
                    prop_assert!(prev_temp.contains(p));
                    locked.push(*p);
                }
            }
            for p in &locked {
                prop_assert!(!e.temp.iter().any(|t| t.0 == p.0 || t.1 == p.1));
            }
            prop_assert!(e.perm_weight >= perm_weight);
            perm_weight = e.perm_weight.clone();
            prev_temp = e.temp.clone();
        }
    }

    #[test]
    fn oracle_dominates_both_online_algorithms(inst in instance(5, 1, 4)) {
        let omega = offline_opt_bruteforce(&inst, DEFAULT_BUDGET).unwrap();
        let z = omega.valuation.total;
        prop_assert!(z >= run_algorithm2(&inst).valuation.total);
        let e = expand_binary(&inst).unwrap();
        let run = run_algorithm1(&e.graph, &e.arrivals, &e.locks).unwrap();
        let alloc = e.allocation(&run.perm);
        prop_assert!(z_reference(&inst, &alloc) >= run.weight);
        prop_assert!(z >= run.weight);
    }

    #[test]
    fn branch_and_bound_equals_enumeration(inst in instance(3, 2, 3)) {
        let bb = offline_opt_bruteforce(&inst, DEFAULT_BUDGET).unwrap();
        prop_assert_eq!(&bb.valuation.total, &enumerate_opt(&inst));
        prop_assert!(bb.allocation.check(&inst).is_ok());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn halving_chain_holds(inst in instance(4, 3, 4)) {
        let chain = verify_theorem2_chain(&inst, DEFAULT_BUDGET).unwrap();
        prop_assert!(chain.holds(), "{:?}", chain.witnesses);
    }
}
