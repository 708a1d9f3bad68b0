//! Path discovery. Each algorithm is a next-hop rule evaluated at the node
//! currently holding the discovery token; [`discover`] folds a rule over a
//! static snapshot of pool availability.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::overlay::{DemandId, PoolId, Time, VirtualGraph};
use crate::physics::FidelityBound;
use crate::topology::{NodeId, PhysicalGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    #[serde(alias = "greedy")]
    ClassicalGreedy,
    ModifiedGreedy,
    LocalBestEffort,
    NonLocalBestEffort,
    /// on-demand baseline: the physical shortest path known to the source
    ShortestPath,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::ClassicalGreedy,
        Algorithm::ModifiedGreedy,
        Algorithm::LocalBestEffort,
        Algorithm::NonLocalBestEffort,
        Algorithm::ShortestPath,
    ];

    pub const PATH_DISCOVERY: [Algorithm; 4] = [
        Algorithm::ClassicalGreedy,
        Algorithm::ModifiedGreedy,
        Algorithm::LocalBestEffort,
        Algorithm::NonLocalBestEffort,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Algorithm::ClassicalGreedy => "classical-greedy",
            Algorithm::ModifiedGreedy => "modified-greedy",
            Algorithm::LocalBestEffort => "local-best-effort",
            Algorithm::NonLocalBestEffort => "non-local-best-effort",
            Algorithm::ShortestPath => "shortest-path",
        }
    }

    /// How far around the token holder pool state must be current.
    pub fn lookahead(&self) -> u32 {
        match self {
            Algorithm::NonLocalBestEffort => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hop {
    pub next: NodeId,
    pub pool: PoolId,
    /// the rule rejected its preferred neighbor and took the physical
    /// greedy hop instead
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Demand {
    pub id: DemandId,
    pub source: NodeId,
    pub destination: NodeId,
    pub requested: u32,
}

impl Demand {
    pub fn new(id: DemandId, source: NodeId, destination: NodeId, requested: u32) -> Result<Self> {
        if source == destination {
            return Err(Error::InvalidParameter(format!(
                "demand {id} has s == e == {source}"
            )));
        }
        if requested == 0 {
            return Err(Error::InvalidParameter(format!(
                "demand {id} requests 0 links"
            )));
        }
        Ok(Demand {
            id,
            source,
            destination,
            requested,
        })
    }

    pub fn rounds(&self, cap: u32) -> u32 {
        self.requested.div_ceil(cap)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemandState {
    Pending,
    Discovering,
    WaitingForLinks,
    Completed { at: Time },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoutePath {
    pub nodes: Vec<NodeId>,
    pub pools: Vec<PoolId>,
    pub hop_lengths: Vec<u32>,
}

impl RoutePath {
    pub fn start(s: NodeId) -> Self {
        RoutePath {
            nodes: vec![s],
            pools: Vec::new(),
            hop_lengths: Vec::new(),
        }
    }

    pub fn hops(&self) -> usize {
        self.pools.len()
    }

    pub fn physical_length(&self) -> u64 {
        self.hop_lengths.iter().map(|&d| d as u64).sum()
    }

    pub fn push(&mut self, next: NodeId, pool: PoolId, length: u32) {
        self.nodes.push(next);
        self.pools.push(pool);
        self.hop_lengths.push(length);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutingOutcome {
    pub demand: DemandId,
    /// path used in the last round
    pub path: RoutePath,
    /// swaps per delivered link on the last path (hops - 1)
    pub swap_count: u32,
    /// swaps summed over every delivered link of every round
    pub total_swaps: u64,
    pub links_consumed: u64,
    pub latency_steps: Time,
    /// worst end-to-end pair delivered to this demand
    pub fidelity_bound: FidelityBound,
    pub rounds_used: u32,
    pub restarts: u32,
    /// the step ceiling was hit; latency is a lower bound
    pub censored: bool,
}

// ---------------------------------------------------------------------------
// next-hop rules

#[inline]
fn key(g: &PhysicalGraph, v: NodeId, e: NodeId) -> (u32, NodeId) {
    (g.dist(v, e), v)
}

/// Physical neighbor closest to `e` (smallest id on ties).
pub fn physical_greedy(vg: &VirtualGraph, cur: NodeId, e: NodeId) -> Hop {
    let g = vg.physical();
    let nb = vg
        .neighbors(cur)
        .iter()
        .filter(|n| n.physical)
        .min_by_key(|n| key(g, n.node, e))
        .expect("connected graph has a physical neighbor");
    Hop {
        next: nb.node,
        pool: nb.pool,
        fallback: false,
    }
}

fn fallback(vg: &VirtualGraph, cur: NodeId, e: NodeId) -> Hop {
    Hop {
        fallback: true,
        ..physical_greedy(vg, cur, e)
    }
}

pub fn next_hop(vg: &VirtualGraph, alg: Algorithm, cur: NodeId, e: NodeId, required: u32) -> Hop {
    debug_assert_ne!(cur, e);
    let g = vg.physical();
    let here = g.dist(cur, e);
    match alg {
        Algorithm::ShortestPath => physical_greedy(vg, cur, e),
        Algorithm::ClassicalGreedy => {
            let nb = vg
                .neighbors(cur)
                .iter()
                .min_by_key(|n| key(g, n.node, e))
                .expect("neighbor");
            Hop {
                next: nb.node,
                pool: nb.pool,
                fallback: false,
            }
        }
        Algorithm::ModifiedGreedy => {
            let nb = vg
                .neighbors(cur)
                .iter()
                .min_by_key(|n| key(g, n.node, e))
                .expect("neighbor");
            let short = vg.available(nb.pool) < required;
            let detour = here < g.dist(cur, nb.node) + g.dist(nb.node, e);
            if short && detour {
                fallback(vg, cur, e)
            } else {
                Hop {
                    next: nb.node,
                    pool: nb.pool,
                    fallback: false,
                }
            }
        }
        Algorithm::LocalBestEffort => {
            let best = vg
                .neighbors(cur)
                .iter()
                .filter(|n| vg.available(n.pool) >= required)
                .min_by_key(|n| key(g, n.node, e));
            match best {
                Some(nb) if g.dist(nb.node, e) < here => Hop {
                    next: nb.node,
                    pool: nb.pool,
                    fallback: false,
                },
                _ => fallback(vg, cur, e),
            }
        }
        Algorithm::NonLocalBestEffort => non_local(vg, cur, e, required),
    }
}

/// Best distance to `e` reachable in one more hop from `v`.
fn reach(vg: &VirtualGraph, v: NodeId, e: NodeId, required: u32) -> u32 {
    if v == e {
        return 0;
    }
    let g = vg.physical();
    let nbs = vg.neighbors(v);
    let avail = nbs
        .iter()
        .filter(|n| vg.available(n.pool) >= required)
        .map(|n| g.dist(n.node, e))
        .min();
    avail.unwrap_or_else(|| {
        nbs.iter()
            .filter(|n| n.physical)
            .map(|n| g.dist(n.node, e))
            .min()
            .expect("neighbor")
    })
}

fn non_local(vg: &VirtualGraph, cur: NodeId, e: NodeId, required: u32) -> Hop {
    let g = vg.physical();
    let here = g.dist(cur, e);
    let nbs = vg.neighbors(cur);
    if let Some(nb) = nbs
        .iter()
        .find(|n| n.node == e && (n.physical || vg.available(n.pool) >= required))
    {
        return Hop {
            next: e,
            pool: nb.pool,
            fallback: false,
        };
    }
    let mut first: Vec<_> = nbs
        .iter()
        .filter(|n| vg.available(n.pool) >= required)
        .collect();
    if first.is_empty() {
        first = nbs.iter().filter(|n| n.physical).collect();
    }
    let pick = first
        .into_iter()
        .min_by_key(|n| (reach(vg, n.node, e, required), n.node))
        .expect("neighbor");
    if g.dist(pick.node, e) < here {
        Hop {
            next: pick.node,
            pool: pick.pool,
            fallback: false,
        }
    } else {
        fallback(vg, cur, e)
    }
}

// ---------------------------------------------------------------------------
// static discovery

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Discovery {
    pub path: RoutePath,
    pub fallbacks: Vec<bool>,
}

/// Runs discovery against the current pool availability without touching
/// any pool.
pub fn discover(
    vg: &VirtualGraph,
    alg: Algorithm,
    s: NodeId,
    e: NodeId,
    required: u32,
) -> Discovery {
    let g = vg.physical();
    let mut path = RoutePath::start(s);
    let mut fallbacks = Vec::new();
    let mut cur = s;
    while cur != e {
        let hop = next_hop(vg, alg, cur, e, required);
        path.push(hop.next, hop.pool, g.dist(cur, hop.next));
        fallbacks.push(hop.fallback);
        cur = hop.next;
    }
    Discovery { path, fallbacks }
}

pub fn pathdisc_classical_greedy(vg: &VirtualGraph, s: NodeId, e: NodeId) -> RoutePath {
    discover(vg, Algorithm::ClassicalGreedy, s, e, 1).path
}

pub fn pathdisc_modified_greedy(
    vg: &VirtualGraph,
    s: NodeId,
    e: NodeId,
    required: u32,
) -> RoutePath {
    discover(vg, Algorithm::ModifiedGreedy, s, e, required).path
}

pub fn pathdisc_local_best_effort(
    vg: &VirtualGraph,
    s: NodeId,
    e: NodeId,
    required: u32,
) -> RoutePath {
    discover(vg, Algorithm::LocalBestEffort, s, e, required).path
}

pub fn pathdisc_non_local_best_effort(
    vg: &VirtualGraph,
    s: NodeId,
    e: NodeId,
    required: u32,
) -> RoutePath {
    discover(vg, Algorithm::NonLocalBestEffort, s, e, required).path
}

pub fn shortest_physical_path(vg: &VirtualGraph, s: NodeId, e: NodeId) -> RoutePath {
    discover(vg, Algorithm::ShortestPath, s, e, 1).path
}

/// Routes a single demand to completion (or the step ceiling) on `vg`,
/// advancing pool lifecycles as it goes.
pub fn execute_demand(
    vg: &mut VirtualGraph,
    alg: Algorithm,
    demand: Demand,
    p: f64,
    max_steps: Time,
    seed: u64,
) -> Result<RoutingOutcome> {
    let params = crate::engine::SimParams {
        algorithm: alg,
        p,
        max_steps,
        sync_seed: seed,
        trace: false,
    };
    let out = crate::engine::simulate(vg, &[demand], params)?;
    Ok(out.outcomes.into_iter().next().expect("one outcome"))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::overlay::{build_deterministic_ring, build_on_demand, VirtualGraph};
    use crate::topology::build_ring;

    fn det8() -> VirtualGraph {
        build_deterministic_ring(Arc::new(build_ring(8).unwrap()), 2, 1).unwrap()
    }

    fn drain(vg: &mut VirtualGraph, u: NodeId, v: NodeId) {
        let r = vg.reserve(u, v, vg.cap(), 99, 0).unwrap();
        vg.consume(&r.handles, 99, 0).unwrap();
    }

    #[test]
    fn fresh_ring_paths() {
        let vg = det8();
        for alg in Algorithm::PATH_DISCOVERY {
            let d = discover(&vg, alg, 0, 4, 1);
            assert_eq!(d.path.nodes, vec![0, 2, 4], "{alg:?}");
            assert_eq!(discover(&vg, alg, 0, 1, 1).path.nodes, vec![0, 1]);
        }
    }

    #[test]
    fn modified_greedy_keeps_on_path_neighbor() {
        let mut vg = det8();
        drain(&mut vg, 0, 2);
        let d = discover(&vg, Algorithm::ModifiedGreedy, 0, 4, 1);
        assert_eq!(d.path.nodes, vec![0, 2, 4]);
        assert!(d.fallbacks.iter().all(|f| !f));
        assert_eq!(pathdisc_classical_greedy(&vg, 0, 4).nodes, vec![0, 2, 4]);
    }

    #[test]
    fn local_best_effort_falls_back() {
        let mut vg = det8();
        drain(&mut vg, 0, 2);
        // 6 is as close to 4 as 2 was
        assert_eq!(
            pathdisc_local_best_effort(&vg, 0, 4, 1).nodes,
            vec![0, 6, 4]
        );
        drain(&mut vg, 0, 6);
        let d = discover(&vg, Algorithm::LocalBestEffort, 0, 4, 1);
        assert_eq!(d.path.nodes, vec![0, 1, 2, 4]);
        // required above cap: purely physical
        let vg = det8();
        assert_eq!(
            pathdisc_local_best_effort(&vg, 0, 4, 2).nodes,
            vec![0, 1, 2, 3, 4]
        );
    }

    #[test]
    fn on_demand_is_physical() {
        let vg = build_on_demand(Arc::new(build_ring(8).unwrap()), 1).unwrap();
        for alg in Algorithm::PATH_DISCOVERY {
            assert_eq!(discover(&vg, alg, 0, 3, 1).path.nodes, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn demand_rounds() {
        assert_eq!(Demand::new(0, 0, 1, 4).unwrap().rounds(4), 1);
        assert_eq!(Demand::new(0, 0, 1, 5).unwrap().rounds(4), 2);
        assert!(Demand::new(0, 1, 1, 1).is_err());
        assert!(Demand::new(0, 0, 1, 0).is_err());
    }
}
