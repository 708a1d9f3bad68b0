use std::sync::Arc;

use super::*;
use crate::topology::{build_grid, build_ring, build_rrgg};

fn ring(n: u32) -> Arc<PhysicalGraph> {
    Arc::new(build_ring(n).unwrap())
}

fn virt_neighbors(vg: &VirtualGraph, u: NodeId) -> Vec<NodeId> {
    vg.neighbors(u)
        .iter()
        .filter(|n| !n.physical)
        .map(|n| n.node)
        .collect()
}

#[test]
fn deterministic_ring_n8() {
    let vg = build_deterministic_ring(ring(8), 2, 1).unwrap();
    assert_eq!(virt_neighbors(&vg, 2), vec![0, 4]);
    assert_eq!(virt_neighbors(&vg, 4), vec![2, 6]);
    for odd in [1, 3, 5, 7] {
        assert!(virt_neighbors(&vg, odd).is_empty());
    }
    assert_eq!(vg.pools().len(), 8 + 4);
    let flat = build_deterministic_ring(ring(8), 1, 1).unwrap();
    assert_eq!(flat.pools().len(), 8);
    assert!(build_deterministic_ring(ring(12), 2, 1).is_err());
    assert!(build_deterministic_ring(ring(8), 3, 1).is_err());
}

#[test]
fn deterministic_grid_5x5() {
    let g = Arc::new(build_grid(5, 5).unwrap());
    let vg = build_deterministic_grid(g.clone(), 2, 1, false).unwrap();
    let id = |r: u32, c: u32| r * 5 + c;
    assert_eq!(
        virt_neighbors(&vg, id(2, 2)),
        vec![id(0, 2), id(2, 0), id(2, 4), id(4, 2)]
    );
    assert!(virt_neighbors(&vg, id(1, 2)).is_empty());
    let flat = build_deterministic_grid(g.clone(), 1, 1, false).unwrap();
    assert_eq!(flat.pools().len(), g.edge_count());
    let wrapped = build_deterministic_grid(g, 2, 1, true).unwrap();
    wrapped.check_invariants(0).unwrap();
}

#[test]
fn sampler_probabilities() {
    let g = build_ring(8).unwrap();
    let s = NeighborSampler::new(NeighborDistribution::PowerLaw { alpha: 1.0 }, 2).unwrap();
    assert!((s.beta(&g, 0) - 3.0).abs() < 1e-12);
    let p = s.p_choose(&g, 0);
    assert_eq!(p.len(), 2);
    for (_, q) in p {
        assert!((q - 1.0 / 6.0).abs() < 1e-12);
    }
    let g32 = build_ring(32).unwrap();
    let u = NeighborSampler::new(NeighborDistribution::Uniform, 4).unwrap();
    assert_eq!(u.beta(&g32, 5), 8.0);
    assert!(u
        .p_choose(&g32, 5)
        .iter()
        .all(|&(_, q)| (q - 0.125).abs() < 1e-12));
    assert!(NeighborSampler::new(NeighborDistribution::Uniform, 1).is_err());
    assert_eq!(
        NeighborSampler::new(NeighborDistribution::Uniform, 7)
            .unwrap()
            .k,
        2
    );
}

#[test]
fn random_graph_respects_d_th_and_is_mutual() {
    let vg = sample_random_virtual(
        ring(64),
        NeighborDistribution::PowerLaw { alpha: 1.0 },
        8,
        2,
        11,
    )
    .unwrap();
    vg.check_invariants(0).unwrap();
    for p in vg.pools() {
        assert!(p.pair_distance <= 8);
        assert!(vg.neighbors(p.u).iter().any(|n| n.node == p.v));
        assert!(vg.neighbors(p.v).iter().any(|n| n.node == p.u));
    }
    // each node drew 3 neighbors; merged pools mean at most 64*3 virtual pools
    let virt = vg
        .pools()
        .iter()
        .filter(|p| p.origin == LinkOrigin::Virtual)
        .count();
    assert!((64 * 3 / 2..=64 * 3).contains(&virt));
}

#[test]
fn recursive_bounds_hold() {
    let base = build_ring(8).unwrap();
    for level in 0..=2 {
        let (g, rc) = build_rrgg(&base, level).unwrap();
        let vg = build_recursive_virtual(Arc::new(g), &rc, 2, 1).unwrap();
        vg.check_invariants(0).unwrap();
        let fresh = vg
            .pools()
            .iter()
            .filter(|p| p.origin == (LinkOrigin::Recursive { level }))
            .count();
        assert_eq!(fresh, 4 * rc.copies_at(level).len());
    }
}

#[test]
fn reserve_and_consume() {
    let mut vg = build_deterministic_ring(ring(8), 2, 4).unwrap();
    let r = vg.reserve(0, 2, 2, 7, 0).unwrap();
    assert_eq!((r.handles.len(), r.shortfall), (2, 0));
    let pid = vg.pool_id(0, 2).unwrap();
    assert_eq!(vg.available(pid), 2);
    let r2 = vg.reserve(0, 2, 3, 8, 0).unwrap();
    assert_eq!((r2.handles.len(), r2.shortfall), (2, 1));
    // other demand cannot consume 7's links
    assert!(matches!(
        vg.consume(&r.handles, 8, 0),
        Err(Error::ProtocolViolation(_))
    ));
    vg.consume(&r.handles, 7, 0).unwrap();
    assert_eq!(vg.pool(pid).counts().consumed, 2);
    assert!(vg.consume(&r.handles, 7, 0).is_err());
    assert!(vg.reserve(0, 5, 1, 1, 0).is_err());
}

#[test]
fn expiry_voids_reservation() {
    let mut vg = build_deterministic_ring(ring(8), 2, 1).unwrap();
    vg.set_lifecycle(Lifecycle {
        t_th: Some(10),
        ..Lifecycle::default()
    });
    let r = vg.reserve(0, 1, 1, 3, 0).unwrap();
    let ev = vg.step_lifecycle(10);
    assert!(ev.is_empty());
    assert!(vg.holds(r.handles[0], 3));
    let ev = vg.step_lifecycle(11);
    assert!(ev
        .iter()
        .any(|e| e.kind == LifecycleEventKind::Expired { voided: Some(3) } && e.at == 11));
    assert!(!vg.holds(r.handles[0], 3));
    assert!(matches!(
        vg.consume(&r.handles, 3, 11),
        Err(Error::ProtocolViolation(_))
    ));
}

#[test]
fn p0_one_regenerates_next_step() {
    for stepping in [Stepping::Sampled, Stepping::Stepwise] {
        let mut vg = build_deterministic_ring(ring(8), 2, 1).unwrap().fresh(5);
        vg.set_lifecycle(Lifecycle {
            p0: 1.0,
            stepping,
            ..Lifecycle::default()
        });
        let r = vg.reserve(0, 1, 1, 0, 4).unwrap();
        vg.consume(&r.handles, 0, 4).unwrap();
        let pid = vg.pool_id(0, 1).unwrap();
        vg.step_lifecycle(4);
        assert_eq!(vg.available(pid), 0);
        vg.step_lifecycle(5);
        assert_eq!(vg.available(pid), 1, "{stepping:?}");
        assert_eq!(
            vg.created_at(SlotHandle {
                pool: pid,
                slot: 0,
                epoch: 0
            }),
            Some(5)
        );
    }
}

#[test]
fn claims_turn_into_reservations() {
    let mut vg = build_deterministic_ring(ring(8), 2, 1).unwrap().fresh(9);
    vg.set_lifecycle(Lifecycle {
        p0: 0.5,
        ..Lifecycle::default()
    });
    let r = vg.reserve(0, 2, 1, 0, 0).unwrap();
    vg.consume(&r.handles, 0, 0).unwrap();
    let pid = vg.pool_id(0, 2).unwrap();
    vg.step_lifecycle(0);
    let c = vg.claim_pool(pid, 1, 4);
    assert_eq!(c.len(), 1);
    assert!(vg.claim_pool(pid, 1, 5).is_empty());
    let ClaimStatus::Pending { ready_at } = vg.claim_status(c[0], 4) else {
        panic!()
    };
    assert!(ready_at >= 1);
    vg.step_lifecycle(ready_at);
    let ClaimStatus::Ready(h) = vg.claim_status(c[0], 4) else {
        panic!()
    };
    assert!(vg.holds(h, 4));
    assert_eq!(vg.available(pid), 0);
}

#[test]
fn conservation_under_churn() {
    let mut vg = build_deterministic_ring(ring(16), 4, 3).unwrap().fresh(1);
    vg.set_lifecycle(Lifecycle {
        p0: 0.05,
        t_th: Some(40),
        ..Lifecycle::default()
    });
    let mut held: Vec<(DemandId, SlotHandle)> = Vec::new();
    for t in 0..400u64 {
        vg.step_lifecycle(t);
        vg.check_invariants(t).unwrap();
        let pid = (t * 7 % vg.pools().len() as u64) as PoolId;
        let d = (t % 5) as DemandId;
        let r = vg.reserve_pool(pid, 2, d);
        held.extend(r.handles.into_iter().map(|h| (d, h)));
        if t % 3 == 0 {
            let (keep, go): (Vec<_>, Vec<_>) = held.drain(..).partition(|(_, h)| h.slot % 2 == 0);
            for (d, h) in go {
                if vg.holds(h, d) {
                    vg.consume(&[h], d, t).unwrap();
                }
            }
            held = keep;
        }
    }
}
