use super::*;
use crate::overlay::Strategy;
use crate::routing::execute_demand;

fn det_ring(n: u32, d_th: u32, cap: u32) -> VirtualGraph {
    build_deterministic_ring(Arc::new(build_ring(n).unwrap()), d_th, cap).unwrap()
}

#[test]
fn lone_demand_on_fresh_graph_costs_two_traversals() {
    let mut vg = det_ring(8, 2, 1);
    let d = Demand::new(0, 0, 4, 1).unwrap();
    let o = execute_demand(&mut vg, Algorithm::ClassicalGreedy, d, 0.9993, 1_000_000, 1).unwrap();
    assert_eq!(o.path.nodes, vec![0, 2, 4]);
    assert_eq!(o.latency_steps, 8);
    assert_eq!(o.swap_count, 1);
    assert_eq!(o.total_swaps, 1);
    assert_eq!(o.links_consumed, 2);
    assert!(!o.censored);
    // both links were created at step 0 and consumed at step 4
    let f4 = 0.25 + 0.75 * 0.9993f64.powi(8);
    assert!((o.fidelity_bound.value - f4 * f4).abs() < 1e-12);
}

#[test]
fn multi_round_demand() {
    let mut vg = det_ring(8, 2, 2);
    let mut life = *vg.lifecycle();
    life.p0 = 1.0;
    vg.set_lifecycle(life);
    let d = Demand::new(0, 0, 4, 3).unwrap();
    let o = execute_demand(&mut vg, Algorithm::LocalBestEffort, d, 0.9993, 1_000_000, 1).unwrap();
    assert_eq!(o.rounds_used, 2);
    assert_eq!(o.total_swaps, 3);
    assert!(o.latency_steps >= 16);
    vg.check_invariants(o.latency_steps).unwrap();
}

#[test]
fn contention_makes_the_later_demand_wait() {
    let g = Arc::new(build_ring(8).unwrap());
    let vg = build_deterministic_ring(g.clone(), 2, 1).unwrap();
    let dm = DemandMatrix {
        entries: vec![(0, 2, 1), (0, 2, 1)],
    };
    let life = *vg.lifecycle();
    let (tr, out) = run_demands(
        &vg,
        life,
        &dm,
        Algorithm::ClassicalGreedy,
        0.9993,
        10_000_000,
        3,
        true,
    )
    .unwrap();
    assert_eq!(tr.outcomes[0].latency_steps, 4);
    assert!(tr.outcomes[1].latency_steps > 4);
    assert!(out.waited[1] > 0);
    assert!(!out.trace.is_empty());
}

#[test]
fn expiry_restarts_the_round() {
    let g = Arc::new(build_ring(16).unwrap());
    let vg = build_deterministic_ring(g, 4, 1).unwrap();
    let dm = DemandMatrix {
        entries: (0..6).map(|k| (0, 8, 1 + k % 2)).collect(),
    };
    for sync_retry in [false, true] {
        let mut life = *vg.lifecycle();
        life.t_th = Some(30);
        life.p0 = 0.05;
        life.sync_retry = sync_retry;
        let (tr, out) = run_demands(
            &vg,
            life,
            &dm,
            Algorithm::ModifiedGreedy,
            0.9993,
            10_000_000,
            9,
            true,
        )
        .unwrap();
        assert_eq!(tr.censored, 0);
        assert!(tr.outcomes.iter().any(|o| o.restarts > 0));
        let synced = out.trace.iter().any(|r| r.event == "sync");
        assert_eq!(synced, sync_retry);
    }
}

#[test]
fn on_demand_latency_at_least_two_traversals() {
    let g = Arc::new(build_ring(16).unwrap());
    let vg = build_on_demand(g, 2).unwrap();
    assert_eq!(vg.strategy(), Strategy::OnDemand);
    let dm = DemandMatrix {
        entries: vec![(0, 5, 3), (1, 9, 1)],
    };
    let life = *vg.lifecycle();
    let (tr, _) = run_demands(
        &vg,
        life,
        &dm,
        Algorithm::ShortestPath,
        0.9993,
        u64::MAX / 4,
        2,
        false,
    )
    .unwrap();
    assert_eq!(tr.outcomes[0].rounds_used, 2);
    assert!(tr.outcomes[0].latency_steps >= 2 * (10 + 2));
    assert!(tr.outcomes[1].latency_steps >= 16 + 8);
}

#[test]
fn censoring_at_the_ceiling() {
    let g = Arc::new(build_ring(8).unwrap());
    let vg = build_deterministic_ring(g, 2, 1).unwrap();
    let mut life = *vg.lifecycle();
    life.p0 = 1e-9;
    let dm = DemandMatrix {
        entries: vec![(0, 4, 5)],
    };
    let (tr, _) = run_demands(
        &vg,
        life,
        &dm,
        Algorithm::ClassicalGreedy,
        0.9993,
        50,
        1,
        false,
    )
    .unwrap();
    assert_eq!(tr.censored, 1);
    assert_eq!(tr.al, None);
}

#[test]
fn demand_matrix_sampling() {
    let g = build_grid(5, 5).unwrap();
    let dm = sample_demand_matrix(&g, 10, [2, 4], 4, 7).unwrap();
    assert_eq!(dm.len(), 10);
    let mut seen = HashSet::new();
    for &(s, e, d) in &dm.entries {
        assert!(s != e && g.dist(s, e) >= 4 && (2..=4).contains(&d));
        assert!(seen.insert((s, e)));
        assert_eq!(dm.get(s, e), d);
    }
    assert_eq!(dm, sample_demand_matrix(&g, 10, [2, 4], 4, 7).unwrap());
    assert!(sample_demand_matrix(&g, 10, [0, 4], 4, 7).is_err());
    assert!(sample_demand_matrix(&g, 1000, [1, 1], 8, 7).is_err());
    let big = build_ring(2000).unwrap();
    let dm = sample_demand_matrix(&big, 50, [1, 1], 900, 1).unwrap();
    assert!(dm.entries.iter().all(|&(s, e, _)| big.dist(s, e) >= 900));
}

const SMALL: &str = r#"
scenario = "small"
seed = 11

[topology]
kind = "ring"
n = 16

[virtual]
strategies = ["deterministic", "uniform", "on-demand"]
d_th = [4]
cap = 2

[routing]
algorithms = ["greedy", "local-best-effort"]

[demand]
counts = [1, 3]
range = [1, 3]
min_pair_distance = 2

[samples]
demand = 6
graph = 2
"#;

#[test]
fn experiment_rows_and_provenance() {
    let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
    let res = run_experiment(&cfg, Execution::Sequential).unwrap();
    // (det + uniform) x 2 algorithms x 2 counts + on-demand x 2 counts
    assert_eq!(res.rows.len(), 10);
    let r = res.row("uniform", "classical-greedy", 4, 3).unwrap();
    assert_eq!(r.n_samples + r.n_errors, 12);
    assert_eq!(
        res.row("deterministic", "classical-greedy", 4, 1)
            .unwrap()
            .n_samples,
        6
    );
    let tsv = res.to_tsv();
    assert_eq!(parse_provenance(&tsv).unwrap(), cfg);
    let header = tsv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header.split('\t').count(), RESULT_COLUMNS.len());
    let par = run_experiment(&cfg, Execution::Parallel).unwrap();
    assert_eq!(par.to_tsv(), tsv);
}

#[test]
fn mean_and_stderr() {
    let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(m, 2.5);
    assert!((s - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-12);
    assert!(mean_stderr(&[]).0.is_nan());
}

#[test]
fn clock() {
    let mut c = SimClock::new(10.0);
    c.tick();
    c.advance_to(10);
    assert_eq!(c.now(), 10);
    assert!((c.seconds() - 10.0 * 5e-5).abs() < 1e-15);
}

#[test]
fn held_reservations_resolve_by_rank() {
    let g = Arc::new(build_ring(16).unwrap());
    let vg = build_deterministic_ring(g.clone(), 4, 1).unwrap();
    let mut life = *vg.lifecycle();
    life.hold_reserved = true;
    for alg in Algorithm::PATH_DISCOVERY {
        for k in 0..40u64 {
            let dm = sample_demand_matrix(&g, 12, [1, 1], 1, k).unwrap();
            let (tr, _) = run_demands(&vg, life, &dm, alg, 0.9993, 100_000_000, k, false).unwrap();
            assert_eq!(tr.censored, 0, "{alg:?} seed {k}");
            assert!(tr.outcomes.iter().all(|o| o.restarts == 0));
        }
    }
}
