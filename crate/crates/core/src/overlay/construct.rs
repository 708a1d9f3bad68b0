use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;

use super::{LinkOrigin, Strategy, VirtualGraph};
use crate::error::{invalid, Error, Result};
use crate::seed;
use crate::topology::{GraphKind, NodeId, PhysicalGraph, RecursiveConstruction};

fn log2_exact(x: u32) -> Option<u32> {
    x.is_power_of_two().then(|| x.trailing_zeros())
}

pub fn build_deterministic_ring(
    g: Arc<PhysicalGraph>,
    d_th: u32,
    cap: u32,
) -> Result<VirtualGraph> {
    let GraphKind::Ring { n } = g.kind() else {
        return invalid("deterministic ring construction needs a ring");
    };
    let log_n = log2_exact(n)
        .ok_or_else(|| Error::Config(format!("ring size {n} is not a power of two")))?;
    let log_d = log2_exact(d_th)
        .ok_or_else(|| Error::Config(format!("d_th={d_th} is not a power of two")))?;
    if d_th > n / 2 {
        return Err(Error::Config(format!("d_th={d_th} exceeds n/2={}", n / 2)));
    }
    check_cap(cap)?;
    let mut vg = VirtualGraph::new(g, Strategy::Deterministic, d_th, cap);
    for (x, y) in ring_rule(n, log_n, log_d) {
        vg.add_pool(x, y, LinkOrigin::Virtual, d_th);
    }
    Ok(vg)
}

/// Links of the hierarchical ring rule: x = 2^i * y (y odd) links to
/// x ± 2^j for j = 1..=min(i, log_d). Node 0 counts as i = log_n.
fn ring_rule(n: u32, log_n: u32, log_d: u32) -> Vec<(NodeId, NodeId)> {
    let mut out = Vec::new();
    for x in 0..n {
        let i = if x == 0 { log_n } else { x.trailing_zeros() };
        for j in 1..=i.min(log_d) {
            let step = 1u32 << j;
            for y in [(x + step) % n, (x + n - step) % n] {
                if y != x {
                    out.push((x, y));
                }
            }
        }
    }
    out
}

pub fn build_deterministic_grid(
    g: Arc<PhysicalGraph>,
    d_th: u32,
    cap: u32,
    wraparound: bool,
) -> Result<VirtualGraph> {
    let GraphKind::Grid { rows, cols } = g.kind() else {
        return invalid("deterministic grid construction needs a grid");
    };
    if rows != cols {
        return Err(Error::Config(format!(
            "deterministic grid needs a square grid, got {rows}x{cols}"
        )));
    }
    let log_d = log2_exact(d_th)
        .ok_or_else(|| Error::Config(format!("d_th={d_th} is not a power of two")))?;
    check_cap(cap)?;
    let side = rows as i64;
    let tz = |a: u32| {
        if a == 0 {
            u32::BITS
        } else {
            a.trailing_zeros()
        }
    };
    let mut vg = VirtualGraph::new(g.clone(), Strategy::Deterministic, d_th, cap);
    for a in 0..rows {
        for b in 0..cols {
            let u = a * cols + b;
            let top = tz(a).min(tz(b)).min(log_d);
            for t in 1..=top {
                let step = 1i64 << t;
                for (da, db) in [(step, 0), (-step, 0), (0, step), (0, -step)] {
                    let (mut ca, mut cb) = (a as i64 + da, b as i64 + db);
                    if wraparound {
                        ca = ca.rem_euclid(side);
                        cb = cb.rem_euclid(side);
                    } else if !(0..side).contains(&ca) || !(0..side).contains(&cb) {
                        continue;
                    }
                    let v = (ca * side + cb) as NodeId;
                    if v == u || g.dist(u, v) > d_th {
                        continue;
                    }
                    vg.add_pool(u, v, LinkOrigin::Virtual, d_th);
                }
            }
        }
    }
    Ok(vg)
}

/// On-demand model: only physical pools, nothing pre-shared.
pub fn build_on_demand(g: Arc<PhysicalGraph>, cap: u32) -> Result<VirtualGraph> {
    check_cap(cap)?;
    Ok(VirtualGraph::new(g, Strategy::OnDemand, 1, cap))
}

fn check_cap(cap: u32) -> Result<()> {
    if cap == 0 {
        return invalid("cap must be >= 1");
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NeighborDistribution {
    Uniform,
    PowerLaw { alpha: f64 },
}

/// Draws the random long-range neighbors of a node.
#[derive(Debug, Clone, Copy)]
pub struct NeighborSampler {
    pub distribution: NeighborDistribution,
    pub d_th: u32,
    /// draws per node
    pub k: usize,
}

impl NeighborSampler {
    pub fn new(distribution: NeighborDistribution, d_th: u32) -> Result<Self> {
        if d_th < 2 {
            return invalid(format!(
                "random virtual neighbors need d_th >= 2, got {d_th}"
            ));
        }
        if let NeighborDistribution::PowerLaw { alpha } = distribution {
            if !(alpha.is_finite() && alpha >= 0.0) {
                return invalid(format!("alpha must be finite and >= 0, got {alpha}"));
            }
        }
        let k = (d_th.ilog2() as usize).max(1);
        Ok(NeighborSampler {
            distribution,
            d_th,
            k,
        })
    }

    /// Normalising constant: sum of dist^-alpha over 0 < dist <= d_th.
    pub fn beta(&self, g: &PhysicalGraph, u: NodeId) -> f64 {
        match self.distribution {
            NeighborDistribution::Uniform => g.ball(u, self.d_th).len() as f64,
            NeighborDistribution::PowerLaw { alpha } => g
                .ball(u, self.d_th)
                .iter()
                .map(|&(_, d)| (d as f64).powf(-alpha))
                .sum(),
        }
    }

    /// P_choose(u, v) for every eligible candidate (2 <= dist <= d_th),
    /// before renormalisation over the eligible set.
    pub fn p_choose(&self, g: &PhysicalGraph, u: NodeId) -> Vec<(NodeId, f64)> {
        let ball = g.ball(u, self.d_th);
        let beta = match self.distribution {
            NeighborDistribution::Uniform => ball.len() as f64,
            NeighborDistribution::PowerLaw { alpha } => {
                ball.iter().map(|&(_, d)| (d as f64).powf(-alpha)).sum()
            }
        };
        ball.into_iter()
            .filter(|&(_, d)| d >= 2)
            .map(|(v, d)| {
                let w = match self.distribution {
                    NeighborDistribution::Uniform => 1.0,
                    NeighborDistribution::PowerLaw { alpha } => (d as f64).powf(-alpha),
                };
                (v, w / beta)
            })
            .collect()
    }

    /// Up to `k` distinct neighbors, sampled without replacement.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        g: &PhysicalGraph,
        u: NodeId,
        rng: &mut R,
    ) -> Vec<NodeId> {
        let cands = self.p_choose(g, u);
        let amount = self.k.min(cands.len());
        cands
            .choose_multiple_weighted(rng, amount, |c| c.1)
            .expect("weights are positive and finite")
            .map(|c| c.0)
            .collect()
    }
}

pub fn sample_random_virtual(
    g: Arc<PhysicalGraph>,
    distribution: NeighborDistribution,
    d_th: u32,
    cap: u32,
    rng_seed: u64,
) -> Result<VirtualGraph> {
    check_cap(cap)?;
    if matches!(g.kind(), GraphKind::Recursive { .. }) {
        return Err(Error::Unsupported(
            "random virtual graphs on recursive graphs".into(),
        ));
    }
    let sampler = NeighborSampler::new(distribution, d_th)?;
    let strategy = match distribution {
        NeighborDistribution::Uniform => Strategy::Uniform,
        NeighborDistribution::PowerLaw { alpha } => Strategy::PowerLaw { alpha },
    };
    let mut rng = seed::rng(rng_seed, &[seed::TAG_GRAPH]);
    let mut vg = VirtualGraph::new(g.clone(), strategy, d_th, cap);
    for u in 0..g.node_count() as NodeId {
        for v in sampler.sample(&g, u, &mut rng) {
            vg.add_pool(u, v, LinkOrigin::Virtual, d_th);
        }
    }
    Ok(vg)
}

/// Virtual graph over an RRGG: every ring copy (and the base) carries a
/// copy of the deterministic virtual graph of the base ring.
pub fn build_recursive_virtual(
    g: Arc<PhysicalGraph>,
    rc: &RecursiveConstruction,
    d_th: u32,
    cap: u32,
) -> Result<VirtualGraph> {
    let n = rc.base_n;
    let log_n = log2_exact(n)
        .ok_or_else(|| Error::Config(format!("base ring size {n} is not a power of two")))?;
    let log_d = log2_exact(d_th)
        .ok_or_else(|| Error::Config(format!("d_th={d_th} is not a power of two")))?;
    if d_th > n / 2 {
        return Err(Error::Config(format!("d_th={d_th} exceeds n/2={}", n / 2)));
    }
    if g.node_count() != rc.node_level.len() {
        return invalid("construction record does not match graph");
    }
    check_cap(cap)?;
    let base_links = ring_rule(n, log_n, log_d);
    let l = rc.level;
    let mut vg = VirtualGraph::new(g, Strategy::Recursive, d_th, cap);
    for level in 0..=l {
        let bound = if level == l {
            d_th
        } else {
            d_th * (rc.predicted_diameters[(l - level - 1) as usize] + 2)
        };
        for off in rc.copies_at(level) {
            for &(x, y) in &base_links {
                vg.add_pool(off + x, off + y, LinkOrigin::Recursive { level }, bound);
            }
        }
    }
    Ok(vg)
}
