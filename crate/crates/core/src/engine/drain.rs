//! Routing as many unit demands as the available links allow between one
//! pair, by planning edge-disjoint paths over the pool multigraph and then
//! reserving and consuming along each.

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::overlay::{PoolId, Time, VirtualGraph};
use crate::routing::RoutePath;
use crate::topology::NodeId;

#[derive(Debug, Clone)]
pub struct DrainReport {
    pub routed: u32,
    pub paths: Vec<RoutePath>,
}

/// Edge-disjoint (in the multigraph sense) paths from `s` to `e` using the
/// currently available links, as many as possible.
pub fn plan_disjoint_paths(vg: &VirtualGraph, s: NodeId, e: NodeId) -> Vec<RoutePath> {
    // flow[pool] > 0 means net flow u -> v, < 0 means v -> u
    let mut flow: HashMap<PoolId, i64> = HashMap::new();
    let n = vg.node_count();
    loop {
        let mut seen = vec![false; n];
        let mut trail: Vec<(PoolId, NodeId, NodeId)> = Vec::new();
        if !augment(vg, &flow, s, e, &mut seen, &mut trail) {
            break;
        }
        for (pool, from, _) in trail {
            let p = vg.pool(pool);
            let dir = if from == p.u { 1 } else { -1 };
            *flow.entry(pool).or_insert(0) += dir;
        }
    }
    decompose(vg, flow, s, e)
}

fn residual(vg: &VirtualGraph, flow: &HashMap<PoolId, i64>, pool: PoolId, from: NodeId) -> i64 {
    let p = vg.pool(pool);
    let f = flow.get(&pool).copied().unwrap_or(0);
    let f = if from == p.u { f } else { -f };
    vg.available(pool) as i64 - f
}

fn augment(
    vg: &VirtualGraph,
    flow: &HashMap<PoolId, i64>,
    u: NodeId,
    e: NodeId,
    seen: &mut [bool],
    trail: &mut Vec<(PoolId, NodeId, NodeId)>,
) -> bool {
    if u == e {
        return true;
    }
    seen[u as usize] = true;
    for nb in vg.neighbors(u) {
        if seen[nb.node as usize] || residual(vg, flow, nb.pool, u) <= 0 {
            continue;
        }
        trail.push((nb.pool, u, nb.node));
        if augment(vg, flow, nb.node, e, seen, trail) {
            return true;
        }
        trail.pop();
    }
    false
}

fn decompose(
    vg: &VirtualGraph,
    mut flow: HashMap<PoolId, i64>,
    s: NodeId,
    e: NodeId,
) -> Vec<RoutePath> {
    let mut out = Vec::new();
    loop {
        // walk forward along positive net flow, cutting cycles as they close
        let mut path = vec![s];
        let mut pools: Vec<PoolId> = Vec::new();
        let mut cur = s;
        while cur != e {
            let step = vg.neighbors(cur).iter().find(|nb| {
                let f = flow.get(&nb.pool).copied().unwrap_or(0);
                let p = vg.pool(nb.pool);
                (cur == p.u && f > 0) || (cur == p.v && f < 0)
            });
            let Some(nb) = step else { break };
            let (next, pool) = (nb.node, nb.pool);
            if let Some(pos) = path.iter().position(|&x| x == next) {
                // cycle: cancel it and back up
                let mut cycle = vec![(pool, cur)];
                for k in (pos..pools.len()).rev() {
                    cycle.push((pools[k], path[k]));
                }
                for (pl, from) in cycle {
                    let p = vg.pool(pl);
                    *flow.get_mut(&pl).unwrap() -= if from == p.u { 1 } else { -1 };
                }
                path.truncate(pos + 1);
                pools.truncate(pos);
                cur = next;
                continue;
            }
            path.push(next);
            pools.push(pool);
            cur = next;
        }
        if cur != e {
            break;
        }
        let mut rp = RoutePath::start(s);
        for (k, &pl) in pools.iter().enumerate() {
            let from = path[k];
            let p = vg.pool(pl);
            *flow.get_mut(&pl).unwrap() -= if from == p.u { 1 } else { -1 };
            rp.push(path[k + 1], pl, p.pair_distance);
        }
        out.push(rp);
    }
    out
}

/// Routes unit demands between `s` and `e` until no path of available
/// links remains. Nothing is regenerated during the drain.
pub fn drain_capacity(
    vg: &mut VirtualGraph,
    s: NodeId,
    e: NodeId,
    now: Time,
) -> Result<DrainReport> {
    let paths = plan_disjoint_paths(vg, s, e);
    for (k, p) in paths.iter().enumerate() {
        let id = k as u32;
        let mut handles = Vec::with_capacity(p.hops());
        for &pool in &p.pools {
            let r = vg.reserve_pool(pool, 1, id);
            if r.shortfall > 0 {
                return Err(Error::ProtocolViolation(format!(
                    "planned path {k} lost pool {pool}"
                )));
            }
            handles.extend(r.handles);
        }
        vg.consume(&handles, id, now)?;
    }
    if connected(vg, s, e) {
        return Err(Error::ProtocolViolation(
            "drain left an available path".into(),
        ));
    }
    Ok(DrainReport {
        routed: paths.len() as u32,
        paths,
    })
}

fn connected(vg: &VirtualGraph, s: NodeId, e: NodeId) -> bool {
    let mut seen = vec![false; vg.node_count()];
    let mut q = VecDeque::from([s]);
    seen[s as usize] = true;
    while let Some(u) = q.pop_front() {
        if u == e {
            return true;
        }
        for nb in vg.neighbors(u) {
            if !seen[nb.node as usize] && vg.available(nb.pool) > 0 {
                seen[nb.node as usize] = true;
                q.push_back(nb.node);
            }
        }
    }
    false
}
