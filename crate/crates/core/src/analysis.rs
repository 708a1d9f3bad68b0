//! Oracles and empirical checks of the analytical results: max-flow /
//! min-cut, swap-count scaling fits, phase statistics, fidelity growth and
//! latency on recursively generated graphs.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;

use crate::config::StrategyKind;
use crate::engine::{
    build_virtual, drain_capacity, map_indexed, mean_stderr, run_demands, sample_demand_matrix,
    DemandMatrix, Execution,
};
use crate::error::{Error, Result};
use crate::overlay::{Lifecycle, VirtualGraph};
use crate::routing::{discover, Algorithm};
use crate::seed;
use crate::topology::{build_grid, build_ring, build_rrgg, NodeId, PhysicalGraph};

// ---------------------------------------------------------------------------
// max-flow oracle

/// Undirected multigraph; each entry of `edges` is one unit of capacity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Multigraph {
    pub n: usize,
    pub edges: Vec<(NodeId, NodeId)>,
}

impl Multigraph {
    /// One edge per currently available link.
    pub fn from_available(vg: &VirtualGraph) -> Self {
        let edges = vg
            .pools()
            .iter()
            .enumerate()
            .flat_map(|(i, p)| std::iter::repeat_n((p.u, p.v), vg.available(i as u32) as usize))
            .collect();
        Multigraph {
            n: vg.node_count(),
            edges,
        }
    }

    /// One edge per neighbor pair, whatever its state.
    pub fn simple(vg: &VirtualGraph) -> Self {
        Multigraph {
            n: vg.node_count(),
            edges: vg.pools().iter().map(|p| (p.u, p.v)).collect(),
        }
    }

    /// Reads either a physical-graph dump (`u v`) or a virtual-graph dump
    /// (`u v pair_distance cap available`, multiplicity = available).
    pub fn from_dump(text: &str) -> Result<Self> {
        let mut n = 0usize;
        let mut edges = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                let f: Vec<&str> = h.split_whitespace().collect();
                if f.len() == 3 {
                    if let Ok(k) = f[1].parse::<usize>() {
                        n = n.max(k);
                    }
                }
                continue;
            }
            let f: Vec<u32> = line
                .split_whitespace()
                .map(|x| {
                    x.parse()
                        .map_err(|_| Error::Config(format!("bad dump line: {line}")))
                })
                .collect::<Result<_>>()?;
            let (u, v, mult) = match f.as_slice() {
                [u, v] => (*u, *v, 1),
                [u, v, _, _, a] => (*u, *v, *a),
                _ => return Err(Error::Config(format!("bad dump line: {line}"))),
            };
            n = n.max(u.max(v) as usize + 1);
            edges.extend(std::iter::repeat_n((u, v), mult as usize));
        }
        Ok(Multigraph { n, edges })
    }

    fn capacity_matrix(&self) -> Vec<Vec<i64>> {
        let mut c = vec![vec![0i64; self.n]; self.n];
        for &(u, v) in &self.edges {
            if u != v {
                c[u as usize][v as usize] += 1;
                c[v as usize][u as usize] += 1;
            }
        }
        c
    }
}

/// s–t max-flow by shortest augmenting paths; equals the number of
/// edge-disjoint s–t paths.
pub fn max_flow(g: &Multigraph, s: NodeId, t: NodeId) -> u32 {
    if s == t {
        return 0;
    }
    let n = g.n;
    let mut res = g.capacity_matrix();
    let (s, t) = (s as usize, t as usize);
    let mut flow = 0;
    loop {
        let mut prev = vec![usize::MAX; n];
        prev[s] = s;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            if u == t {
                break;
            }
            for v in 0..n {
                if prev[v] == usize::MAX && res[u][v] > 0 {
                    prev[v] = u;
                    q.push_back(v);
                }
            }
        }
        if prev[t] == usize::MAX {
            return flow;
        }
        let mut v = t;
        while v != s {
            let u = prev[v];
            res[u][v] -= 1;
            res[v][u] += 1;
            v = u;
        }
        flow += 1;
    }
}

/// Smallest number of edges whose removal disconnects the graph.
pub fn global_min_cut(g: &Multigraph) -> u32 {
    (1..g.n as NodeId)
        .map(|t| max_flow(g, 0, t))
        .min()
        .unwrap_or(0)
}

/// s–t min cut by enumerating every vertex bipartition; small graphs only.
pub fn min_cut_exhaustive(g: &Multigraph, s: NodeId, t: NodeId) -> Result<u32> {
    if g.n > 20 {
        return Err(Error::InvalidParameter(format!(
            "{} nodes is too many to enumerate",
            g.n
        )));
    }
    let (sb, tb) = (1u32 << s, 1u32 << t);
    let mut best = u32::MAX;
    for mask in 0..(1u32 << g.n) {
        if mask & sb == 0 || mask & tb != 0 {
            continue;
        }
        let cut = g
            .edges
            .iter()
            .filter(|&&(u, v)| ((mask >> u) & 1) != ((mask >> v) & 1))
            .count() as u32;
        best = best.min(cut);
    }
    Ok(best)
}

/// Edge-disjoint s–e paths over the available links of `vg`.
pub fn mincut_oracle(vg: &VirtualGraph, s: NodeId, e: NodeId) -> u32 {
    max_flow(&Multigraph::from_available(vg), s, e)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MincutReport {
    pub graphs: usize,
    pub pairs: usize,
    /// pairs where fewer than mincut * cap unit demands were routed
    pub violations: usize,
    /// pairs where the drain disagreed with the oracle's max-flow
    pub oracle_mismatches: usize,
    /// pairs (on graphs of at most 8 nodes) where max-flow and cut
    /// enumeration disagreed
    pub enumeration_mismatches: usize,
}

/// Random small virtual graphs with regeneration off: for every pair, the
/// engine's drain must route at least mincut * cap unit demands.
pub fn verify_mincut_lemma(graphs: usize, base_seed: u64) -> Result<MincutReport> {
    let mut rep = MincutReport {
        graphs,
        ..Default::default()
    };
    let frozen = Lifecycle {
        t_th: None,
        regenerate: false,
        ..Lifecycle::default()
    };
    for gi in 0..graphs {
        let mut rng = seed::rng(base_seed, &[seed::TAG_GRAPH, gi as u64]);
        let (g, max_d) = if rng.random_bool(0.7) {
            let n = rng.random_range(5..=12);
            (build_ring(n)?, n / 2)
        } else {
            let (r, c) = [(2, 3), (2, 4), (3, 3), (2, 5), (3, 4), (2, 6)][rng.random_range(0..6)];
            (build_grid(r, c)?, r + c - 2)
        };
        let g = Arc::new(g);
        let strategy = if rng.random_bool(0.5) {
            StrategyKind::Uniform
        } else {
            StrategyKind::PowerLaw
        };
        let d_th = rng.random_range(2..=max_d.max(2));
        let cap = rng.random_range(1..=2);
        let gs = seed::derive(base_seed, &[seed::TAG_PAIRS, gi as u64]);
        let mut vg = build_virtual(&g, None, strategy, d_th, cap, 1.0, false, gs)?;
        vg.set_lifecycle(frozen);
        let unit = Multigraph::simple(&vg);
        let n = vg.node_count() as NodeId;
        for s in 0..n {
            for e in (s + 1)..n {
                rep.pairs += 1;
                let lemma = max_flow(&unit, s, e) * cap;
                let oracle = mincut_oracle(&vg, s, e);
                if n <= 8 && min_cut_exhaustive(&Multigraph::from_available(&vg), s, e)? != oracle {
                    rep.enumeration_mismatches += 1;
                }
                let mut copy = vg.fresh(gs);
                copy.set_lifecycle(frozen);
                let routed = drain_capacity(&mut copy, s, e, 0)?.routed;
                if routed < lemma {
                    rep.violations += 1;
                }
                if routed != oracle {
                    rep.oracle_mismatches += 1;
                }
            }
        }
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------
// swap-count scaling

/// Second term of the two-term swap-count model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SecondTerm {
    Log,
    LogOverLogLog,
    LinearOverLogSquared,
}

impl SecondTerm {
    pub fn eval(&self, d_th: u32) -> f64 {
        let l = (d_th as f64).log2();
        match self {
            SecondTerm::Log => l,
            SecondTerm::LogOverLogLog => l / l.log2(),
            SecondTerm::LinearOverLogSquared => d_th as f64 / (l * l),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SecondTerm::Log => "log d",
            SecondTerm::LogOverLogLog => "log d / log log d",
            SecondTerm::LinearOverLogSquared => "d / (log d)^2",
        }
    }
}

/// Model for one (strategy, algorithm) cell.
pub fn scaling_model(strategy: StrategyKind, algorithm: Algorithm) -> Result<SecondTerm> {
    match (strategy, algorithm) {
        (StrategyKind::Deterministic, _) => Ok(SecondTerm::Log),
        (StrategyKind::PowerLaw, Algorithm::NonLocalBestEffort) => Ok(SecondTerm::LogOverLogLog),
        (StrategyKind::PowerLaw, _) => Ok(SecondTerm::Log),
        (StrategyKind::Uniform, _) => Ok(SecondTerm::LinearOverLogSquared),
        (s, _) => Err(Error::Unsupported(format!(
            "no scaling model for {}",
            s.label()
        ))),
    }
}

pub const MIN_SCALING_TRIALS: usize = 500;
pub const MIN_R2: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingPoint {
    pub n: u32,
    pub d_th: u32,
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub model: SecondTerm,
    pub a: f64,
    pub b: f64,
    pub r2: f64,
    pub points: Vec<ScalingPoint>,
    /// means above the fitted bound (beyond rounding)
    pub above: usize,
    /// consecutive d_th pairs where the model falls but the mean rises by
    /// more than two standard errors
    pub monotone_violations: usize,
}

impl ScalingFit {
    pub fn predict(&self, n: u32, d_th: u32) -> f64 {
        self.a * n as f64 / d_th as f64 + self.b * self.model.eval(d_th)
    }

    pub fn pass(&self) -> bool {
        self.a >= 0.0 && self.b >= 0.0 && self.r2 >= MIN_R2 && self.above == 0
    }
}

/// Tightest bound a·x + b·y ≥ mean over all points with a, b ≥ 0: the
/// two-variable linear program min Σ(a·x + b·y − mean) is solved by
/// enumerating the vertices of its feasible region.
pub fn fit_envelope(points: &[ScalingPoint], model: SecondTerm) -> Result<ScalingFit> {
    if points.is_empty() {
        return Err(Error::InvalidParameter("no points to fit".into()));
    }
    let rows: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|p| (p.n as f64 / p.d_th as f64, model.eval(p.d_th), p.mean))
        .collect();
    let feasible = |a: f64, b: f64| {
        a >= 0.0
            && b >= 0.0
            && rows
                .iter()
                .all(|&(x, y, m)| a * x + b * y >= m - 1e-9 * m.abs().max(1.0))
    };
    let mut cands: Vec<(f64, f64)> = Vec::new();
    for (i, &(x1, y1, m1)) in rows.iter().enumerate() {
        if x1 > 0.0 {
            cands.push((m1 / x1, 0.0));
        }
        if y1 > 0.0 {
            cands.push((0.0, m1 / y1));
        }
        for &(x2, y2, m2) in &rows[i + 1..] {
            let det = x1 * y2 - x2 * y1;
            if det.abs() > 1e-12 {
                cands.push(((m1 * y2 - m2 * y1) / det, (x1 * m2 - x2 * m1) / det));
            }
        }
    }
    let (sx, sy): (f64, f64) = rows
        .iter()
        .fold((0.0, 0.0), |acc, r| (acc.0 + r.0, acc.1 + r.1));
    let (a, b) = cands
        .into_iter()
        .filter(|&(a, b)| feasible(a, b))
        .min_by(|p, q| (p.0 * sx + p.1 * sy).total_cmp(&(q.0 * sx + q.1 * sy)))
        .ok_or_else(|| Error::InvalidParameter("no nonnegative envelope exists".into()))?;
    let mean = rows.iter().map(|r| r.2).sum::<f64>() / rows.len() as f64;
    let ss_tot: f64 = rows.iter().map(|r| (r.2 - mean).powi(2)).sum();
    let ss_res: f64 = rows.iter().map(|r| (r.2 - a * r.0 - b * r.1).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    let mut fit = ScalingFit {
        model,
        a,
        b,
        r2,
        points: points.to_vec(),
        above: 0,
        monotone_violations: 0,
    };
    fit.above = points
        .iter()
        .filter(|p| p.mean > fit.predict(p.n, p.d_th) * (1.0 + 1e-9) + 1e-9)
        .count();
    let mut sorted = points.to_vec();
    sorted.sort_by_key(|p| (p.n, p.d_th));
    fit.monotone_violations = sorted
        .windows(2)
        .filter(|w| w[0].n == w[1].n)
        .filter(|w| fit.predict(w[1].n, w[1].d_th) < fit.predict(w[0].n, w[0].d_th))
        .filter(|w| w[1].mean - w[0].mean > 2.0 * (w[0].stderr.hypot(w[1].stderr)))
        .count();
    Ok(fit)
}

/// Ring or square grid of side `n`, for the scaling experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Ring,
    Grid,
}

impl Family {
    pub fn build(&self, n: u32) -> Result<PhysicalGraph> {
        match self {
            Family::Ring => build_ring(n),
            Family::Grid => build_grid(n, n),
        }
    }
}

/// Links never expire and are never regenerated: every pre-shared link is
/// available when a lone demand is routed.
pub fn frozen_lifecycle() -> Lifecycle {
    Lifecycle {
        t_th: None,
        regenerate: false,
        ..Lifecycle::default()
    }
}

const TRIALS_PER_GRAPH: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScalingCell {
    pub family: Family,
    pub strategy: StrategyKind,
    pub algorithm: Algorithm,
}

impl ScalingCell {
    /// Greedy-column and two-hop-column cells for each ring strategy.
    pub fn ring_cells() -> Vec<ScalingCell> {
        let mut v = Vec::new();
        for strategy in [
            StrategyKind::Deterministic,
            StrategyKind::PowerLaw,
            StrategyKind::Uniform,
        ] {
            for algorithm in [Algorithm::ModifiedGreedy, Algorithm::NonLocalBestEffort] {
                v.push(ScalingCell {
                    family: Family::Ring,
                    strategy,
                    algorithm,
                });
            }
        }
        v
    }

    /// e.g. `det-ring-greedy`, `power-grid-non`
    pub fn name(&self) -> String {
        let s = match self.strategy {
            StrategyKind::Deterministic => "det",
            StrategyKind::PowerLaw => "power",
            StrategyKind::Uniform => "uniform",
            StrategyKind::OnDemand => "on-demand",
            StrategyKind::Recursive => "recursive",
        };
        let f = match self.family {
            Family::Ring => "ring",
            Family::Grid => "grid",
        };
        let a = match self.algorithm {
            Algorithm::NonLocalBestEffort => "non",
            Algorithm::LocalBestEffort => "lbe",
            Algorithm::ClassicalGreedy => "classical",
            _ => "greedy",
        };
        format!("{s}-{f}-{a}")
    }

    pub fn parse(name: &str) -> Result<ScalingCell> {
        let parts: Vec<&str> = name.split('-').collect();
        let bad = || {
            Error::Config(format!(
                "unknown scaling cell '{name}' (expected e.g. det-ring-greedy)"
            ))
        };
        let [s, f, a] = parts.as_slice() else {
            return Err(bad());
        };
        let strategy = match *s {
            "det" => StrategyKind::Deterministic,
            "power" => StrategyKind::PowerLaw,
            "uniform" => StrategyKind::Uniform,
            _ => return Err(bad()),
        };
        let family = match *f {
            "ring" => Family::Ring,
            "grid" => Family::Grid,
            _ => return Err(bad()),
        };
        let algorithm = match *a {
            "greedy" => Algorithm::ModifiedGreedy,
            "lbe" => Algorithm::LocalBestEffort,
            "non" => Algorithm::NonLocalBestEffort,
            "classical" => Algorithm::ClassicalGreedy,
            _ => return Err(bad()),
        };
        Ok(ScalingCell {
            family,
            strategy,
            algorithm,
        })
    }
}

/// Mean swap count of single unit demands between uniformly random pairs.
pub fn measure_swaps(
    cell: ScalingCell,
    n: u32,
    d_th: u32,
    trials: usize,
    base_seed: u64,
    exec: Execution,
) -> Result<ScalingPoint> {
    let g = Arc::new(cell.family.build(n)?);
    let alpha = if cell.family == Family::Grid {
        2.0
    } else {
        1.0
    };
    let n_graphs = if cell.strategy.is_random() {
        trials.div_ceil(TRIALS_PER_GRAPH)
    } else {
        1
    };
    let graphs: Vec<VirtualGraph> = (0..n_graphs)
        .map(|gi| {
            let gs = seed::derive(
                base_seed,
                &[seed::TAG_GRAPH, n as u64, d_th as u64, gi as u64],
            );
            build_virtual(&g, None, cell.strategy, d_th, 1, alpha, false, gs)
        })
        .collect::<Result<_>>()?;
    let per_graph = trials.div_ceil(n_graphs);
    let swaps: Vec<Result<f64>> = map_indexed(trials, exec, |k| {
        let ts = seed::derive(
            base_seed,
            &[seed::TAG_DEMAND, n as u64, d_th as u64, k as u64],
        );
        let dm = sample_demand_matrix(&g, 1, [1, 1], 1, ts)?;
        let (tr, _) = run_demands(
            &graphs[k / per_graph],
            frozen_lifecycle(),
            &dm,
            cell.algorithm,
            1.0,
            u64::MAX / 4,
            ts,
            false,
        )?;
        Ok(tr.total_swaps as f64)
    });
    let swaps: Vec<f64> = swaps.into_iter().collect::<Result<_>>()?;
    let (mean, stderr) = mean_stderr(&swaps);
    Ok(ScalingPoint {
        n,
        d_th,
        mean,
        stderr,
        trials,
    })
}

pub fn verify_table1_scaling(
    cell: ScalingCell,
    ns: &[u32],
    d_ths: &[u32],
    trials: usize,
    base_seed: u64,
    exec: Execution,
) -> Result<ScalingFit> {
    if trials < MIN_SCALING_TRIALS {
        return Err(Error::InvalidParameter(format!(
            "{trials} trials per point is too few for a scaling fit (need {MIN_SCALING_TRIALS})"
        )));
    }
    let model = scaling_model(cell.strategy, cell.algorithm)?;
    let mut points = Vec::new();
    for &n in ns {
        for &d in d_ths {
            points.push(measure_swaps(cell, n, d, trials, base_seed, exec)?);
        }
    }
    fit_envelope(&points, model)
}

// ---------------------------------------------------------------------------
// phase statistics

/// How the X bands shrink towards the destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XShrink {
    /// |u−e| ≤ d_th / 2^i
    Halving,
    /// |u−e| ≤ d_th / (log2 d_th)^i
    LogFactor,
}

impl XShrink {
    fn base(&self, d_th: u32) -> f64 {
        match self {
            XShrink::Halving => 2.0,
            XShrink::LogFactor => (d_th as f64).log2().max(2.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseStats {
    /// ceil(2|s−e| / d_th)
    pub m_prime: u32,
    /// hops taken from each Z band, i = 0..m'−2
    pub z_hops: Vec<u32>,
    /// hops taken from each X band the walk can enter, up to X_{m−1}
    /// (hops from X_m, the physical neighbors of e, are not binned)
    pub x_hops: Vec<u32>,
}

impl PhaseStats {
    pub fn mean_z(&self) -> Option<f64> {
        (!self.z_hops.is_empty())
            .then(|| self.z_hops.iter().sum::<u32>() as f64 / self.z_hops.len() as f64)
    }

    pub fn mean_x(&self) -> Option<f64> {
        (!self.x_hops.is_empty())
            .then(|| self.x_hops.iter().sum::<u32>() as f64 / self.x_hops.len() as f64)
    }
}

/// Bins each hop of a discovered path by the band its origin lies in.
pub fn phase_hop_statistics(
    g: &PhysicalGraph,
    path: &[NodeId],
    d_th: u32,
    shrink: XShrink,
) -> PhaseStats {
    let (s, e) = (path[0], *path.last().unwrap());
    let dse = g.dist(s, e);
    let m_prime = (2 * dse).div_ceil(d_th);
    let base = shrink.base(d_th);
    // smallest m with base^m ≥ d_th
    let mut m = 0u32;
    while base.powi(m as i32) < d_th as f64 - 1e-9 {
        m += 1;
    }
    // largest i with du · base^i ≤ d_th
    let band = |du: u32| {
        let mut i = 0u32;
        while (du as f64) * base.powi(i as i32 + 1) <= d_th as f64 + 1e-9 {
            i += 1;
        }
        i
    };
    // the X bands a walk can enter start where the Z bands end
    let start = if dse == 0 {
        m
    } else {
        band(dse.min(d_th / 2).max(1)).min(m)
    };
    let mut z_hops = vec![0u32; m_prime.saturating_sub(1) as usize];
    let mut x_hops = vec![0u32; (m - start) as usize];
    for &u in &path[..path.len() - 1] {
        let du = g.dist(u, e);
        if 2 * du > d_th {
            let i = (2 * (dse - du) / d_th) as usize;
            z_hops[i] += 1;
        } else {
            let i = band(du);
            if i < m {
                x_hops[(i - start) as usize] += 1;
            }
        }
    }
    PhaseStats {
        m_prime,
        z_hops,
        x_hops,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSample {
    pub n: u32,
    /// per-trace mean hops per Z band (traces with at least one Z band)
    pub z_means: Vec<f64>,
    /// (band index, hops) for every full-width Z band; the last Z band of
    /// a trace is cut short by the X region and left out
    pub z_bands: Vec<(u32, u32)>,
    /// per-trace mean hops per X band
    pub x_means: Vec<f64>,
}

/// Discovery traces of single unit demands on fresh power-law or uniform
/// rings.
pub fn collect_phase_samples(
    strategy: StrategyKind,
    algorithm: Algorithm,
    n: u32,
    d_th: u32,
    traces: usize,
    base_seed: u64,
) -> Result<PhaseSample> {
    if !strategy.is_random() {
        return Err(Error::Unsupported(
            "phase statistics need a random strategy".into(),
        ));
    }
    let g = Arc::new(build_ring(n)?);
    let shrink = if algorithm == Algorithm::NonLocalBestEffort {
        XShrink::LogFactor
    } else {
        XShrink::Halving
    };
    let mut z_means = Vec::new();
    let mut z_bands = Vec::new();
    let mut x_means = Vec::new();
    let n_graphs = traces.div_ceil(TRIALS_PER_GRAPH);
    for gi in 0..n_graphs {
        let gs = seed::derive(base_seed, &[seed::TAG_GRAPH, n as u64, gi as u64]);
        let vg = build_virtual(&g, None, strategy, d_th, 1, 1.0, false, gs)?;
        let count = TRIALS_PER_GRAPH.min(traces - gi * TRIALS_PER_GRAPH);
        let mut rng = seed::rng(base_seed, &[seed::TAG_PAIRS, n as u64, gi as u64]);
        for _ in 0..count {
            let s = rng.random_range(0..n);
            let mut e = rng.random_range(0..n - 1);
            if e >= s {
                e += 1;
            }
            let path = discover(&vg, algorithm, s, e, 1).path.nodes;
            let st = phase_hop_statistics(&g, &path, d_th, shrink);
            z_means.extend(st.mean_z());
            let full = st.z_hops.len().saturating_sub(1);
            z_bands.extend((0..full).map(|i| (i as u32, st.z_hops[i])));
            x_means.extend(st.mean_x());
        }
    }
    Ok(PhaseSample {
        n,
        z_means,
        z_bands,
        x_means,
    })
}

/// Ordinary least squares of y on x: (slope, its standard error).
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - icpt - slope * x).powi(2))
        .sum();
    (slope, (sse / (n - 2.0) / sxx).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTrend {
    pub per_n: Vec<(u32, f64, f64)>,
    pub slope: f64,
    pub slope_se: f64,
}

impl PhaseTrend {
    pub fn flat(&self) -> bool {
        self.slope.abs() <= 2.0 * self.slope_se
    }
}

/// Within-band regression of Z-band hop counts on n: each band index is its
/// own group (demeaned separately), over the bands every sample reaches.
pub fn z_phase_trend(samples: &[PhaseSample]) -> PhaseTrend {
    let per_n = samples
        .iter()
        .map(|s| {
            let (m, se) = mean_stderr(&s.z_means);
            (s.n, m, se)
        })
        .collect();
    let bands = samples
        .iter()
        .map(|s| s.z_bands.iter().map(|b| b.0 + 1).max().unwrap_or(0))
        .min()
        .unwrap_or(0) as usize;
    let mut groups = vec![(Vec::new(), Vec::new()); bands];
    for s in samples {
        for &(i, h) in &s.z_bands {
            if let Some(g) = groups.get_mut(i as usize) {
                g.0.push(s.n as f64);
                g.1.push(h as f64);
            }
        }
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (gx, gy) in groups.into_iter().filter(|g| !g.0.is_empty()) {
        let mx = gx.iter().sum::<f64>() / gx.len() as f64;
        let my = gy.iter().sum::<f64>() / gy.len() as f64;
        xs.extend(gx.iter().map(|x| x - mx));
        ys.extend(gy.iter().map(|y| y - my));
    }
    let (slope, slope_se) = ols_slope(&xs, &ys);
    // one degree of freedom per band mean already removed
    let dof = xs.len() as f64;
    let adj = ((dof - 2.0) / (dof - 1.0 - bands as f64).max(1.0)).sqrt();
    PhaseTrend {
        per_n,
        slope,
        slope_se: slope_se * adj,
    }
}

// ---------------------------------------------------------------------------
// fidelity growth

#[derive(Debug, Clone, PartialEq)]
pub struct FidelityGrowth {
    pub strategy: StrategyKind,
    /// (n, mean links consumed)
    pub points: Vec<(u32, f64)>,
    /// envelope constant over all but the largest n
    pub c: f64,
    /// per-link fidelity and the resulting end-to-end bound at the largest n
    pub per_link: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Allowed overshoot of the largest-n mean over the bound extrapolated
/// from the smaller sizes.
pub const FIDELITY_SLACK: f64 = 1.25;

fn growth(strategy: StrategyKind, n: u32) -> f64 {
    let l = (n as f64).log2();
    match strategy {
        StrategyKind::Uniform => n as f64 / (l * l),
        _ => l,
    }
}

/// Mean links per unit demand on fresh rings with d_th = n/2, and whether
/// the largest size stays within the growth law fitted to the others.
pub fn verify_fidelity_corollary(
    ns: &[u32],
    strategy: StrategyKind,
    per_link: f64,
    trials: usize,
    base_seed: u64,
) -> Result<FidelityGrowth> {
    if ns.len() < 2 {
        return Err(Error::InvalidParameter("need at least two sizes".into()));
    }
    let mut points = Vec::new();
    for &n in ns {
        let cell = ScalingCell {
            family: Family::Ring,
            strategy,
            algorithm: Algorithm::ModifiedGreedy,
        };
        let p = measure_swaps(
            cell,
            n,
            n.div_ceil(2),
            trials,
            base_seed,
            Execution::Sequential,
        )?;
        // a unit demand consumes one more link than it swaps
        points.push((n, p.mean + 1.0));
    }
    let (last, fit) = points.split_last().unwrap();
    let c = fit
        .iter()
        .map(|&(n, l)| l / growth(strategy, n))
        .fold(0.0, f64::max);
    let pass = last.1 <= FIDELITY_SLACK * c * growth(strategy, last.0);
    Ok(FidelityGrowth {
        strategy,
        c,
        per_link,
        bound: per_link.powf(last.1),
        pass,
        points,
    })
}

// ---------------------------------------------------------------------------
// recursively generated graphs

#[derive(Debug, Clone, PartialEq)]
pub struct RrggLatency {
    /// (level, mean single-demand latency, latency / (n/2)^(level+1))
    pub levels: Vec<(u32, f64, f64)>,
    pub bound_violations: usize,
    pub edges_checked: usize,
    /// level 0 discovery differs from the plain deterministic ring
    pub level0_mismatches: usize,
    pub pass: bool,
}

/// Normalised latency at any level may exceed level 0's by at most this
/// factor.
pub const RRGG_SLACK: f64 = 2.0;

pub fn verify_rrgg_latency(
    base_n: u32,
    max_level: u32,
    d_th: u32,
    trials: usize,
    base_seed: u64,
) -> Result<RrggLatency> {
    let base = build_ring(base_n)?;
    // diameters of each level, measured independently of the construction
    let diams: Vec<u32> = (0..=max_level)
        .map(|l| build_rrgg(&base, l).and_then(|(g, _)| g.bfs_diameter()))
        .collect::<Result<_>>()?;
    let mut levels = Vec::new();
    let mut violations = 0;
    let mut checked = 0;
    let mut level0_mismatches = 0;
    for l in 0..=max_level {
        let (g, rc) = build_rrgg(&base, l)?;
        let g = Arc::new(g);
        let vg = build_virtual(
            &g,
            Some(&rc),
            StrategyKind::Recursive,
            d_th,
            1,
            1.0,
            false,
            0,
        )?;
        for p in vg.pools() {
            let bound = match p.origin {
                crate::overlay::LinkOrigin::Recursive { level } if level < l => {
                    d_th * (diams[(l - level - 1) as usize] + 2)
                }
                crate::overlay::LinkOrigin::Recursive { .. } => d_th,
                _ => 1,
            };
            checked += 1;
            if g.dist(p.u, p.v) > bound {
                violations += 1;
            }
        }
        if l == 0 {
            let ring = build_virtual(
                &g,
                None,
                StrategyKind::Deterministic,
                d_th,
                1,
                1.0,
                false,
                0,
            )?;
            for s in 0..base_n {
                for e in 0..base_n {
                    if s != e
                        && discover(&vg, Algorithm::ModifiedGreedy, s, e, 1).path.nodes
                            != discover(&ring, Algorithm::ModifiedGreedy, s, e, 1)
                                .path
                                .nodes
                    {
                        level0_mismatches += 1;
                    }
                }
            }
        }
        let mut lat = Vec::with_capacity(trials);
        for k in 0..trials {
            let ts = seed::derive(base_seed, &[seed::TAG_DEMAND, l as u64, k as u64]);
            let dm: DemandMatrix = sample_demand_matrix(&g, 1, [1, 1], 1, ts)?;
            let (tr, _) = run_demands(
                &vg,
                frozen_lifecycle(),
                &dm,
                Algorithm::ModifiedGreedy,
                1.0,
                u64::MAX / 4,
                ts,
                false,
            )?;
            lat.push(tr.al.expect("uncensored"));
        }
        let mean = mean_stderr(&lat).0;
        let scale = ((base_n / 2) as f64).powi(l as i32 + 1);
        levels.push((l, mean, mean / scale));
    }
    let r0 = levels[0].2;
    let pass =
        violations == 0 && level0_mismatches == 0 && levels.iter().all(|x| x.2 <= RRGG_SLACK * r0);
    Ok(RrggLatency {
        levels,
        bound_violations: violations,
        edges_checked: checked,
        level0_mismatches,
        pass,
    })
}

// ---------------------------------------------------------------------------
// report

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub statistic: f64,
    pub threshold: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn push(
        &mut self,
        name: impl Into<String>,
        statistic: f64,
        threshold: impl Into<String>,
        pass: bool,
    ) {
        self.checks.push(Check {
            name: name.into(),
            statistic,
            threshold: threshold.into(),
            pass,
        });
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("check\tstatistic\tthreshold\tresult\n");
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{}\t{:.6}\t{}\t{}",
                c.name,
                c.statistic,
                c.threshold,
                if c.pass { "pass" } else { "fail" }
            );
        }
        s
    }
}

/// Sizes for the verification suite.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyPlan {
    pub seed: u64,
    pub scaling_ns: Vec<u32>,
    pub scaling_d_th: Vec<u32>,
    pub scaling_trials: usize,
    pub mincut_graphs: usize,
    pub phase_ns: Vec<u32>,
    pub phase_traces: usize,
    pub phase_d_th: u32,
    pub fidelity_ns: Vec<u32>,
    pub rrgg_levels: u32,
    pub trials: usize,
}

impl VerifyPlan {
    pub fn quick(seed: u64) -> Self {
        VerifyPlan {
            seed,
            scaling_ns: vec![64, 128, 256],
            scaling_d_th: vec![4, 8, 16],
            scaling_trials: MIN_SCALING_TRIALS,
            mincut_graphs: 50,
            phase_ns: vec![128, 256, 512],
            phase_traces: 2000,
            phase_d_th: 16,
            fidelity_ns: vec![16, 32, 64, 128],
            rrgg_levels: 2,
            trials: 200,
        }
    }

    pub fn full(seed: u64) -> Self {
        VerifyPlan {
            scaling_ns: vec![64, 128, 256, 512, 1024],
            scaling_d_th: vec![4, 8, 16, 32],
            mincut_graphs: 200,
            phase_traces: 10_000,
            fidelity_ns: vec![16, 32, 64, 128, 256],
            trials: 500,
            ..Self::quick(seed)
        }
    }
}

/// Runs every check in `plan`.
pub fn run_verification(plan: &VerifyPlan, exec: Execution) -> Result<Report> {
    let mut rep = Report::default();
    for cell in ScalingCell::ring_cells() {
        scaling_checks(&mut rep, cell, plan, exec)?;
    }
    mincut_checks(&mut rep, plan)?;
    phase_checks(&mut rep, plan)?;
    fidelity_checks(&mut rep, plan)?;
    rrgg_checks(&mut rep, plan)?;
    Ok(rep)
}

pub fn scaling_checks(
    rep: &mut Report,
    cell: ScalingCell,
    plan: &VerifyPlan,
    exec: Execution,
) -> Result<()> {
    let fit = verify_table1_scaling(
        cell,
        &plan.scaling_ns,
        &plan.scaling_d_th,
        plan.scaling_trials,
        plan.seed,
        exec,
    )?;
    let name = format!("scaling/{}", cell.name());
    rep.push(
        format!("{name}/r2"),
        fit.r2,
        format!(">= {MIN_R2}"),
        fit.r2 >= MIN_R2,
    );
    rep.push(
        format!("{name}/above_bound"),
        fit.above as f64,
        "== 0",
        fit.above == 0 && fit.a >= 0.0 && fit.b >= 0.0,
    );
    rep.push(
        format!("{name}/monotone_violations"),
        fit.monotone_violations as f64,
        "== 0",
        fit.monotone_violations == 0,
    );
    Ok(())
}

pub fn mincut_checks(rep: &mut Report, plan: &VerifyPlan) -> Result<()> {
    let mc = verify_mincut_lemma(plan.mincut_graphs, plan.seed)?;
    rep.push(
        "mincut/violations",
        mc.violations as f64,
        "== 0",
        mc.violations == 0,
    );
    rep.push(
        "mincut/oracle_mismatches",
        mc.oracle_mismatches as f64,
        "== 0",
        mc.oracle_mismatches == 0,
    );
    rep.push(
        "mincut/enumeration_mismatches",
        mc.enumeration_mismatches as f64,
        "== 0",
        mc.enumeration_mismatches == 0,
    );
    Ok(())
}

pub fn phase_checks(rep: &mut Report, plan: &VerifyPlan) -> Result<()> {
    let samples: Vec<PhaseSample> = plan
        .phase_ns
        .iter()
        .map(|&n| {
            collect_phase_samples(
                StrategyKind::PowerLaw,
                Algorithm::ModifiedGreedy,
                n,
                plan.phase_d_th,
                plan.phase_traces,
                plan.seed,
            )
        })
        .collect::<Result<_>>()?;
    let trend = z_phase_trend(&samples);
    rep.push(
        "phases/z_slope_over_se",
        trend.slope / trend.slope_se,
        "|x| <= 2",
        trend.flat(),
    );
    let z_max = trend.per_n.iter().map(|x| x.1).fold(0.0, f64::max);
    rep.push("phases/z_mean_max", z_max, "<= 8", z_max <= 8.0);
    let x_all: Vec<f64> = samples
        .iter()
        .flat_map(|s| s.x_means.iter().copied())
        .collect();
    let x_mean = mean_stderr(&x_all).0;
    rep.push("phases/x_mean", x_mean, "<= 32", x_mean <= 32.0);
    Ok(())
}

pub fn fidelity_checks(rep: &mut Report, plan: &VerifyPlan) -> Result<()> {
    for strategy in [
        StrategyKind::Deterministic,
        StrategyKind::PowerLaw,
        StrategyKind::Uniform,
    ] {
        let fg =
            verify_fidelity_corollary(&plan.fidelity_ns, strategy, 0.99, plan.trials, plan.seed)?;
        let (n, l) = *fg.points.last().unwrap();
        let allowed = FIDELITY_SLACK * fg.c * growth(strategy, n);
        rep.push(
            format!("fidelity/{}/links", strategy.label()),
            l,
            format!("<= {allowed:.4}"),
            fg.pass,
        );
    }
    Ok(())
}

pub fn rrgg_checks(rep: &mut Report, plan: &VerifyPlan) -> Result<()> {
    let rr = verify_rrgg_latency(8, plan.rrgg_levels, 4, plan.trials, plan.seed)?;
    let worst = rr
        .levels
        .iter()
        .map(|x| x.2 / rr.levels[0].2)
        .fold(0.0, f64::max);
    rep.push(
        "rrgg/latency_ratio",
        worst,
        format!("<= {RRGG_SLACK}"),
        worst <= RRGG_SLACK,
    );
    rep.push(
        "rrgg/distance_bound_violations",
        rr.bound_violations as f64,
        "== 0",
        rr.bound_violations == 0,
    );
    rep.push(
        "rrgg/level0_mismatches",
        rr.level0_mismatches as f64,
        "== 0",
        rr.level0_mismatches == 0,
    );
    Ok(())
}
