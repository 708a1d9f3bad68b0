use std::sync::Arc;

use proptest::prelude::*;

use qnet_route::config::StrategyKind;
use qnet_route::engine::{build_virtual, run_demands, sample_demand_matrix};
use qnet_route::overlay::{Lifecycle, VirtualGraph};
use qnet_route::physics::{derive_t_threshold, fidelity_after_storage, window_success_prob};
use qnet_route::routing::{discover, Algorithm};
use qnet_route::seed;
use qnet_route::topology::{build_grid, build_ring, PhysicalGraph};

fn physical(ring: bool, size: u32) -> Arc<PhysicalGraph> {
    Arc::new(if ring {
        build_ring(size).unwrap()
    } else {
        build_grid(size / 5 + 2, size / 5 + 2).unwrap()
    })
}

fn strategy(k: u8) -> StrategyKind {
    match k % 4 {
        0 => StrategyKind::Deterministic,
        1 => StrategyKind::PowerLaw,
        2 => StrategyKind::Uniform,
        _ => StrategyKind::OnDemand,
    }
}

fn overlay(ring: bool, size: u32, s: u8, d_th: u32, cap: u32, seed: u64) -> VirtualGraph {
    let g = physical(ring, size);
    let alpha = if ring { 1.0 } else { 2.0 };
    build_virtual(&g, None, strategy(s), d_th, cap, alpha, false, seed).unwrap()
}

/// Takes links out of pools at random so discovery sees mixed availability.
fn drain_some(vg: &mut VirtualGraph, seed: u64, frac: f64) {
    use rand::Rng;
    let mut rng = seed::rng(seed, &[99]);
    for pool in 0..vg.pools().len() as u32 {
        if rng.random::<f64>() < frac {
            let r = vg.reserve_pool(pool, vg.cap(), 1_000_000);
            vg.consume(&r.handles, 1_000_000, 0).unwrap();
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn every_hop_gets_strictly_closer(
        ring in any::<bool>(),
        size in prop::sample::select(vec![8u32, 16, 32]),
        s in any::<u8>(),
        d_th in prop::sample::select(vec![2u32, 4]),
        drained in 0.0f64..1.0,
        seed in any::<u64>(),
        pair in any::<(u32, u32)>(),
        required in 1u32..3,
    ) {
        let mut vg = overlay(ring, size, s, d_th, 2, seed);
        drain_some(&mut vg, seed, drained);
        let n = vg.node_count() as u32;
        let (a, b) = (pair.0 % n, pair.1 % n);
        prop_assume!(a != b);
        let g = vg.physical_arc().clone();
        for alg in Algorithm::ALL {
            let d = discover(&vg, alg, a, b, required);
            prop_assert_eq!(*d.path.nodes.last().unwrap(), b);
            for w in d.path.nodes.windows(2) {
                prop_assert!(g.dist(w[1], b) < g.dist(w[0], b), "{:?} {} -> {}", alg, w[0], w[1]);
                let pool = vg.pool_id(w[0], w[1]);
                prop_assert!(pool.is_some());
                prop_assert!(g.dist(w[0], w[1]) <= d_th.max(1));
            }
        }
    }

    #[test]
    fn on_demand_paths_are_shortest(ring in any::<bool>(), size in 8u32..64, pair in any::<(u32, u32)>()) {
        let vg = overlay(ring, size, 3, 4, 1, 0);
        let n = vg.node_count() as u32;
        let (a, b) = (pair.0 % n, pair.1 % n);
        prop_assume!(a != b);
        let g = vg.physical_arc().clone();
        for alg in Algorithm::ALL {
            prop_assert_eq!(discover(&vg, alg, a, b, 1).path.hops() as u32, g.dist(a, b));
        }
    }

    #[test]
    fn fidelity_decreases_with_storage(p in 0.5f64..0.99999, t in 0u64..5000) {
        let a = fidelity_after_storage(p, t).unwrap();
        let b = fidelity_after_storage(p, t + 1).unwrap();
        prop_assert!(b >= 0.25 && b <= a);
        if a - 0.25 > 1e-9 {
            prop_assert!(b < a);
        }
    }

    #[test]
    fn threshold_sits_on_the_boundary(p in 0.99f64..0.99999, f_th in 0.3f64..0.95) {
        let t = derive_t_threshold(p, f_th).unwrap().unwrap();
        prop_assert!(fidelity_after_storage(p, t).unwrap() > f_th - 1e-12);
        prop_assert!(fidelity_after_storage(p, t + 1).unwrap() <= f_th + 1e-12);
    }

    #[test]
    fn window_probability_monotone(p0 in 1e-5f64..0.01, t in 10u64..5000, d in 1u32..8) {
        let q = window_success_prob(p0, t, d);
        prop_assert!(window_success_prob(p0, t + 10, d) >= q);
        prop_assert!(window_success_prob(p0 * 1.5, t, d) >= q);
        prop_assert!(window_success_prob(p0, t, d + 1) <= q);
    }

    #[test]
    fn sampled_demands_respect_the_spec(
        size in 16u32..40,
        count in 1usize..40,
        lo in 1u32..3,
        extra in 0u32..3,
        min_d in 1u32..4,
        seed in any::<u64>(),
    ) {
        let g = physical(true, size);
        let dm = sample_demand_matrix(&g, count, [lo, lo + extra], min_d, seed).unwrap();
        prop_assert_eq!(dm.len(), count);
        let mut seen = std::collections::HashSet::new();
        for &(s, e, d) in &dm.entries {
            prop_assert!(s != e);
            prop_assert!(g.dist(s, e) >= min_d);
            prop_assert!(d >= lo && d <= lo + extra);
            prop_assert!(seen.insert((s, e)));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn trials_are_deterministic_and_conserve_slots(
        ring in any::<bool>(),
        s in 0u8..3,
        cap in 1u32..4,
        count in 1usize..12,
        hi in 1u32..4,
        hold in any::<bool>(),
        alg in 0usize..4,
        seed in any::<u64>(),
    ) {
        let vg = overlay(ring, 16, s, 4, cap, seed);
        let mut life = Lifecycle { hold_reserved: hold, ..Lifecycle::default() };
        if !hold {
            // keep contended runs short when waits can restart
            life.p0 = 0.01;
        }
        let dm = sample_demand_matrix(vg.physical(), count, [1, hi], 1, seed).unwrap();
        let alg = Algorithm::PATH_DISCOVERY[alg];
        let max = 20_000_000;
        let (a, out) = run_demands(&vg, life, &dm, alg, 0.9993, max, seed, false).unwrap();
        let (b, _) = run_demands(&vg, life, &dm, alg, 0.9993, max, seed, false).unwrap();
        prop_assert_eq!(&a.outcomes, &b.outcomes);
        let consumed: u64 = a.outcomes.iter().map(|o| o.links_consumed).sum();
        prop_assert_eq!(consumed, out.pool_links_consumed);
        for (o, &(_, _, d)) in a.outcomes.iter().zip(&dm.entries) {
            if !o.censored {
                prop_assert_eq!(o.rounds_used, d.div_ceil(cap));
                prop_assert!(o.latency_steps >= 2 * o.path.physical_length());
            }
        }
    }
}

#[test]
fn conservation_after_a_busy_trial() {
    let g = physical(true, 24);
    let mut vg = build_virtual(&g, None, StrategyKind::Uniform, 4, 2, 1.0, false, 5).unwrap();
    vg.set_lifecycle(Lifecycle {
        hold_reserved: true,
        ..Lifecycle::default()
    });
    let dm = sample_demand_matrix(&g, 20, [1, 2], 1, 5).unwrap();
    let ds = dm.demands();
    let params = qnet_route::engine::SimParams {
        algorithm: Algorithm::LocalBestEffort,
        p: 0.9993,
        max_steps: 100_000_000,
        sync_seed: 5,
        trace: false,
    };
    let out = qnet_route::engine::simulate(&mut vg, &ds, params).unwrap();
    let end = out.outcomes.iter().map(|o| o.latency_steps).max().unwrap();
    vg.step_lifecycle(end);
    vg.check_invariants(end).unwrap();
    assert!(out.outcomes.iter().all(|o| !o.censored));
}
