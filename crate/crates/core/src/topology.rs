//! Physical network graphs: rings, bounded grids and regular recursively
//! generated graphs (RRGG) built by edge substitution of a base ring.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::sync::OnceLock;

use crate::error::{invalid, Error, Result};

pub type NodeId = u32;

/// Graphs above this size answer distance queries with a fresh BFS.
pub const MEMO_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphKind {
    Ring { n: u32 },
    Grid { rows: u32, cols: u32 },
    Recursive { level: u32, base_n: u32 },
}

impl GraphKind {
    pub fn label(&self) -> String {
        match *self {
            GraphKind::Ring { n } => format!("ring{n}"),
            GraphKind::Grid { rows, cols } => format!("grid{rows}x{cols}"),
            GraphKind::Recursive { level, base_n } => format!("rrgg{base_n}l{level}"),
        }
    }
}

#[derive(Debug)]
pub struct PhysicalGraph {
    kind: GraphKind,
    adj: Vec<Vec<NodeId>>,
    n_edges: usize,
    diameter: u32,
    rows: Vec<OnceLock<Box<[u32]>>>,
}

impl PhysicalGraph {
    fn from_edges(kind: GraphKind, n: usize, edges: &[(NodeId, NodeId)]) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u == v {
                return invalid(format!("self-loop at {u}"));
            }
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
            a.dedup();
        }
        let n_edges = adj.iter().map(Vec::len).sum::<usize>() / 2;
        let memo = if matches!(kind, GraphKind::Recursive { .. }) && n <= MEMO_LIMIT {
            (0..n).map(|_| OnceLock::new()).collect()
        } else {
            Vec::new()
        };
        let mut g = PhysicalGraph {
            kind,
            adj,
            n_edges,
            diameter: 0,
            rows: memo,
        };
        g.diameter = match kind {
            GraphKind::Ring { n } => n / 2,
            GraphKind::Grid { rows, cols } => rows + cols - 2,
            GraphKind::Recursive { .. } => g.bfs_diameter()?,
        };
        Ok(g)
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.n_edges
    }

    pub fn diameter(&self) -> u32 {
        self.diameter
    }

    pub fn neighbors(&self, u: NodeId) -> &[NodeId] {
        &self.adj[u as usize]
    }

    pub fn is_adjacent(&self, u: NodeId, v: NodeId) -> bool {
        self.adj[u as usize].binary_search(&v).is_ok()
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.adj.iter().enumerate().flat_map(|(u, a)| {
            a.iter()
                .filter(move |&&v| (u as NodeId) < v)
                .map(move |&v| (u as NodeId, v))
        })
    }

    fn check(&self, u: NodeId) -> Result<()> {
        if (u as usize) < self.adj.len() {
            Ok(())
        } else {
            Err(Error::InvalidNode {
                node: u,
                n: self.adj.len(),
            })
        }
    }

    pub fn hop_distance(&self, u: NodeId, v: NodeId) -> Result<u32> {
        self.check(u)?;
        self.check(v)?;
        Ok(self.dist(u, v))
    }

    /// Unchecked variant for hot loops; panics on out-of-range ids.
    #[inline]
    pub fn dist(&self, u: NodeId, v: NodeId) -> u32 {
        match self.kind {
            GraphKind::Ring { n } => {
                let d = u.abs_diff(v);
                d.min(n - d)
            }
            GraphKind::Grid { cols, .. } => {
                let (ur, uc) = (u / cols, u % cols);
                let (vr, vc) = (v / cols, v % cols);
                ur.abs_diff(vr) + uc.abs_diff(vc)
            }
            GraphKind::Recursive { .. } => {
                if self.rows.is_empty() {
                    self.bfs(u)[v as usize]
                } else {
                    self.rows[u as usize].get_or_init(|| self.bfs(u).into_boxed_slice())[v as usize]
                }
            }
        }
    }

    pub fn bfs(&self, src: NodeId) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.adj.len()];
        let mut q = VecDeque::new();
        dist[src as usize] = 0;
        q.push_back(src);
        while let Some(u) = q.pop_front() {
            let du = dist[u as usize];
            for &w in &self.adj[u as usize] {
                if dist[w as usize] == u32::MAX {
                    dist[w as usize] = du + 1;
                    q.push_back(w);
                }
            }
        }
        dist
    }

    pub fn bfs_diameter(&self) -> Result<u32> {
        let mut best = 0;
        for u in 0..self.adj.len() as NodeId {
            let row = self.bfs(u);
            let m = *row.iter().max().unwrap_or(&0);
            if m == u32::MAX {
                return Err(Error::InvalidParameter("graph is disconnected".into()));
            }
            best = best.max(m);
        }
        Ok(best)
    }

    /// All nodes `v != u` with `dist(u, v) <= r`, with their distance,
    /// sorted by node id.
    pub fn ball(&self, u: NodeId, r: u32) -> Vec<(NodeId, u32)> {
        let mut out = Vec::new();
        match self.kind {
            GraphKind::Ring { n } => {
                for j in 1..=r.min(n / 2) {
                    out.push(((u + j) % n, j));
                    let back = (u + n - j) % n;
                    if back != (u + j) % n {
                        out.push((back, j));
                    }
                }
            }
            GraphKind::Grid { rows, cols } => {
                let (ur, uc) = (u / cols, u % cols);
                let r0 = ur.saturating_sub(r);
                let r1 = (ur + r).min(rows - 1);
                for vr in r0..=r1 {
                    let rem = r - ur.abs_diff(vr);
                    let c0 = uc.saturating_sub(rem);
                    let c1 = (uc + rem).min(cols - 1);
                    for vc in c0..=c1 {
                        let v = vr * cols + vc;
                        if v != u {
                            out.push((v, ur.abs_diff(vr) + uc.abs_diff(vc)));
                        }
                    }
                }
            }
            GraphKind::Recursive { .. } => {
                let mut seen = std::collections::HashMap::new();
                let mut q = VecDeque::new();
                seen.insert(u, 0u32);
                q.push_back(u);
                while let Some(x) = q.pop_front() {
                    let dx = seen[&x];
                    if dx == r {
                        continue;
                    }
                    for &w in &self.adj[x as usize] {
                        if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(w) {
                            e.insert(dx + 1);
                            q.push_back(w);
                        }
                    }
                }
                out.extend(seen.into_iter().filter(|&(v, _)| v != u));
            }
        }
        out.sort_unstable();
        out
    }

    /// Grid coordinates (row, col); `None` for non-grid graphs.
    pub fn grid_coords(&self, u: NodeId) -> Option<(u32, u32)> {
        match self.kind {
            GraphKind::Grid { cols, .. } => Some((u / cols, u % cols)),
            _ => None,
        }
    }

    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# {} {} {}",
            self.kind.label(),
            self.node_count(),
            self.edge_count()
        );
        for (u, v) in self.edges() {
            let _ = writeln!(s, "{u} {v}");
        }
        s
    }
}

pub fn build_ring(n: u32) -> Result<PhysicalGraph> {
    if n < 3 {
        return invalid(format!("ring needs n >= 3, got {n}"));
    }
    let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    PhysicalGraph::from_edges(GraphKind::Ring { n }, n as usize, &edges)
}

pub fn build_grid(rows: u32, cols: u32) -> Result<PhysicalGraph> {
    if rows < 2 || cols < 2 {
        return invalid(format!("grid needs both sides >= 2, got {rows}x{cols}"));
    }
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let u = r * cols + c;
            if c + 1 < cols {
                edges.push((u, u + 1));
            }
            if r + 1 < rows {
                edges.push((u, u + cols));
            }
        }
    }
    PhysicalGraph::from_edges(
        GraphKind::Grid { rows, cols },
        (rows * cols) as usize,
        &edges,
    )
}

/// One edge replaced by a copy of the base ring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Substitution {
    pub level: u32,
    pub replaced: (NodeId, NodeId),
    /// id of copy node 0; copy node i has id `offset + i`
    pub offset: NodeId,
}

#[derive(Debug, Clone)]
pub struct RecursiveConstruction {
    pub base_n: u32,
    pub base_diameter: u32,
    pub level: u32,
    pub substitutions: Vec<Substitution>,
    /// level at which each node first appeared
    pub node_level: Vec<u32>,
    /// diameters of G_0..G_level as predicted by the recursion
    pub predicted_diameters: Vec<u32>,
}

impl RecursiveConstruction {
    /// Base-ring index and copy offset for every copy created at `level`
    /// (level 0 is the base itself at offset 0).
    pub fn copies_at(&self, level: u32) -> Vec<NodeId> {
        if level == 0 {
            return vec![0];
        }
        self.substitutions
            .iter()
            .filter(|s| s.level == level)
            .map(|s| s.offset)
            .collect()
    }
}

pub fn build_rrgg(
    base: &PhysicalGraph,
    level: u32,
) -> Result<(PhysicalGraph, RecursiveConstruction)> {
    let n = match base.kind() {
        GraphKind::Ring { n } => n,
        _ => return Err(Error::Unsupported("RRGG base must be a ring".into())),
    };
    if n % 2 != 0 {
        return Err(Error::Unsupported("RRGG base ring must have even n".into()));
    }
    let ring_edges = |off: NodeId| (0..n).map(move |i| (off + i, off + (i + 1) % n));
    let mut edges: Vec<(NodeId, NodeId)> = ring_edges(0).collect();
    let mut node_level = vec![0u32; n as usize];
    let mut fresh: Vec<(NodeId, NodeId)> = edges.clone();
    let mut subs = Vec::new();
    let mut predicted = vec![n / 2];

    for l in 1..=level {
        let replaced: std::collections::HashSet<_> = fresh.iter().copied().collect();
        edges.retain(|e| !replaced.contains(e));
        let mut next_fresh = Vec::with_capacity(fresh.len() * n as usize);
        for &(u, v) in &fresh {
            let off = node_level.len() as NodeId;
            node_level.extend(std::iter::repeat_n(l, n as usize));
            subs.push(Substitution {
                level: l,
                replaced: (u, v),
                offset: off,
            });
            edges.push((u, off));
            edges.push((off + n / 2, v));
            for e in ring_edges(off) {
                edges.push(e);
                next_fresh.push(e);
            }
        }
        fresh = next_fresh;
        let prev = *predicted.last().unwrap();
        predicted.push((n / 2) * (prev + 2));
    }

    let kind = if level == 0 {
        GraphKind::Ring { n }
    } else {
        GraphKind::Recursive { level, base_n: n }
    };
    let g = PhysicalGraph::from_edges(kind, node_level.len(), &edges)?;
    let rc = RecursiveConstruction {
        base_n: n,
        base_diameter: n / 2,
        level,
        substitutions: subs,
        node_level,
        predicted_diameters: predicted,
    };
    Ok((g, rc))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_basics() {
        let g = build_ring(8).unwrap();
        assert_eq!(g.hop_distance(0, 5).unwrap(), 3);
        assert_eq!(g.hop_distance(1, 7).unwrap(), 2);
        assert_eq!(g.diameter(), 4);
        assert_eq!(build_ring(32).unwrap().diameter(), 16);
        let t = build_ring(3).unwrap();
        for u in 0..3 {
            for v in 0..3 {
                if u != v {
                    assert_eq!(t.dist(u, v), 1);
                }
            }
        }
        assert!(build_ring(2).is_err());
    }

    #[test]
    fn grid_basics() {
        let g = build_grid(5, 5).unwrap();
        assert_eq!(g.diameter(), 8);
        assert_eq!(g.hop_distance(0, 24).unwrap(), 8);
        let g2 = build_grid(2, 2).unwrap();
        assert_eq!(g2.dist(0, 3), 2);
        let g3 = build_grid(3, 4).unwrap();
        assert_eq!(g3.node_count(), 12);
        // rows*(cols-1) + cols*(rows-1)
        assert_eq!(g3.edge_count(), 3 * 3 + 4 * 2);
        assert!(build_grid(1, 5).is_err());
        // (1,1) is interior
        assert_eq!(build_grid(4, 4).unwrap().neighbors(5).len(), 4);
    }

    #[test]
    fn invalid_node() {
        let g = build_ring(8).unwrap();
        assert!(matches!(
            g.hop_distance(0, 8),
            Err(Error::InvalidNode { .. })
        ));
    }

    #[test]
    fn rrgg_counts() {
        let base = build_ring(8).unwrap();
        let (g0, _) = build_rrgg(&base, 0).unwrap();
        assert_eq!((g0.node_count(), g0.edge_count()), (8, 8));
        let (g1, rc1) = build_rrgg(&base, 1).unwrap();
        assert_eq!((g1.node_count(), g1.edge_count()), (72, 80));
        assert_eq!(g1.diameter(), 24);
        assert_eq!(rc1.predicted_diameters, vec![4, 24]);
        // base ids preserved
        assert!(rc1.node_level[..8].iter().all(|&l| l == 0));
        assert!(build_rrgg(&build_grid(3, 3).unwrap(), 1).is_err());
    }

    #[test]
    fn dump_header() {
        let d = build_grid(2, 2).unwrap().dump();
        assert!(d.starts_with("# grid2x2 4 4\n"));
        assert_eq!(d.lines().count(), 5);
    }
}
