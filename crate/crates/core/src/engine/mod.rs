//! Trials and experiments: demand sampling, the simulation loop, and
//! aggregation over Monte-Carlo samples.

mod drain;
mod sim;

pub use drain::{drain_capacity, plan_disjoint_paths, DrainReport};
pub use sim::{SimOutput, SimParams, TraceRecord};

/// Runs `demands` on `vg` in place (no fresh copy), returning per-demand
/// outcomes.
pub fn simulate(vg: &mut VirtualGraph, demands: &[Demand], params: SimParams) -> Result<SimOutput> {
    sim::Simulation::new(vg, demands, params).run()
}

use std::collections::HashSet;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;

use crate::config::{ExperimentConfig, StrategyKind, TopologySpec};
use crate::error::{Error, Result};
use crate::overlay::{
    build_deterministic_grid, build_deterministic_ring, build_on_demand, build_recursive_virtual,
    sample_random_virtual, Lifecycle, NeighborDistribution, Stepping, Time, VirtualGraph,
};
use crate::physics::{step_duration_seconds, WindowMode};
use crate::routing::{Algorithm, Demand, RoutingOutcome};
use crate::seed;
use crate::topology::{
    build_grid, build_ring, build_rrgg, GraphKind, NodeId, PhysicalGraph, RecursiveConstruction,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimClock {
    now: Time,
    step_duration_seconds: f64,
}

impl SimClock {
    pub fn new(dist_phys_km: f64) -> Self {
        SimClock {
            now: 0,
            step_duration_seconds: step_duration_seconds(dist_phys_km),
        }
    }

    pub fn now(&self) -> Time {
        self.now
    }

    pub fn tick(&mut self) -> Time {
        self.now += 1;
        self.now
    }

    /// Runs idle ticks up to `t`.
    pub fn advance_to(&mut self, t: Time) {
        assert!(t >= self.now, "clock cannot run backwards");
        self.now = t;
    }

    pub fn step_duration_seconds(&self) -> f64 {
        self.step_duration_seconds
    }

    pub fn seconds(&self) -> f64 {
        self.now as f64 * self.step_duration_seconds
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DemandMatrix {
    /// (s, e, D_se); the position is the demand id and its priority
    pub entries: Vec<(NodeId, NodeId, u32)>,
}

impl DemandMatrix {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, s: NodeId, e: NodeId) -> u32 {
        self.entries
            .iter()
            .find(|x| x.0 == s && x.1 == e)
            .map_or(0, |x| x.2)
    }

    pub fn demands(&self) -> Vec<Demand> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, &(s, e, d))| Demand {
                id: i as u32,
                source: s,
                destination: e,
                requested: d,
            })
            .collect()
    }
}

/// Uniform sample of `count` distinct ordered pairs at hop distance at
/// least `min_pair_distance`, each requesting a uniform count in `range`.
pub fn sample_demand_matrix(
    g: &PhysicalGraph,
    count: usize,
    range: [u32; 2],
    min_pair_distance: u32,
    seed: u64,
) -> Result<DemandMatrix> {
    let [lo, hi] = range;
    if lo == 0 || lo > hi {
        return Err(Error::InvalidParameter(format!(
            "bad demand range [{lo}, {hi}]"
        )));
    }
    let mut rng = seed::rng(seed, &[seed::TAG_PAIRS]);
    let n = g.node_count() as NodeId;
    let min_d = min_pair_distance.max(1);
    let pairs: Vec<(NodeId, NodeId)> = if (n as usize) * (n as usize) <= 1 << 16 {
        let all: Vec<_> = (0..n)
            .flat_map(|s| (0..n).map(move |e| (s, e)))
            .filter(|&(s, e)| s != e && g.dist(s, e) >= min_d)
            .collect();
        if all.len() < count {
            return Err(Error::InvalidParameter(format!(
                "only {} pairs at distance >= {min_d}, {count} requested",
                all.len()
            )));
        }
        index::sample(&mut rng, all.len(), count)
            .into_iter()
            .map(|i| all[i])
            .collect()
    } else {
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(count);
        let mut tries = 0usize;
        while out.len() < count {
            tries += 1;
            if tries > 1000 * count.max(1) + 10_000 {
                return Err(Error::InvalidParameter(format!(
                    "could not find {count} pairs at distance >= {min_d}"
                )));
            }
            let s = rng.random_range(0..n);
            let e = rng.random_range(0..n);
            if s != e && g.dist(s, e) >= min_d && seen.insert((s, e)) {
                out.push((s, e));
            }
        }
        out
    };
    let entries = pairs
        .into_iter()
        .map(|(s, e)| (s, e, rng.random_range(lo..=hi)))
        .collect();
    Ok(DemandMatrix { entries })
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub outcomes: Vec<RoutingOutcome>,
    /// mean latency over completed demands; `None` when nothing completed
    /// (including the empty demand matrix)
    pub al: Option<f64>,
    pub total_swaps: u64,
    /// swaps per delivered pair, averaged over completed demands
    pub mean_swaps: Option<f64>,
    /// worst delivered pair per demand, averaged over completed demands
    pub mean_fidelity_bound: Option<f64>,
    pub censored: usize,
    pub links_consumed: u64,
}

impl TrialResult {
    pub fn from_outcomes(outcomes: Vec<RoutingOutcome>, requested: &[u32]) -> Self {
        let done: Vec<(usize, &RoutingOutcome)> = outcomes
            .iter()
            .enumerate()
            .filter(|(_, o)| !o.censored)
            .collect();
        let k = done.len() as f64;
        let mean = |f: &dyn Fn(usize, &RoutingOutcome) -> f64| {
            (!done.is_empty()).then(|| done.iter().map(|&(i, o)| f(i, o)).sum::<f64>() / k)
        };
        let al = mean(&|_, o| o.latency_steps as f64);
        let mean_swaps = mean(&|i, o| o.total_swaps as f64 / requested[i] as f64);
        let mean_fidelity_bound = mean(&|_, o| o.fidelity_bound.value);
        TrialResult {
            total_swaps: outcomes.iter().map(|o| o.total_swaps).sum(),
            links_consumed: outcomes.iter().map(|o| o.links_consumed).sum(),
            censored: outcomes.len() - done.len(),
            outcomes,
            al,
            mean_swaps,
            mean_fidelity_bound,
        }
    }
}

// ---------------------------------------------------------------------------
// building blocks

pub fn build_physical(
    t: &TopologySpec,
) -> Result<(Arc<PhysicalGraph>, Option<RecursiveConstruction>)> {
    Ok(match *t {
        TopologySpec::Ring { n } => (Arc::new(build_ring(n)?), None),
        TopologySpec::Grid { rows, cols } => (Arc::new(build_grid(rows, cols)?), None),
        TopologySpec::Rrgg { base_n, level } => {
            let base = build_ring(base_n)?;
            let (g, rc) = build_rrgg(&base, level)?;
            (Arc::new(g), Some(rc))
        }
    })
}

pub fn lifecycle_for(cfg: &ExperimentConfig) -> Result<Lifecycle> {
    let np = cfg.noise.resolve()?;
    Ok(Lifecycle {
        p0: np.p0,
        t_th: if cfg.modes.freeze_expiry || np.t_th == u64::MAX {
            None
        } else {
            Some(np.t_th)
        },
        window: if cfg.modes.global_window {
            WindowMode::Global
        } else {
            WindowMode::PerSlot
        },
        stepping: if cfg.modes.stepwise {
            Stepping::Stepwise
        } else {
            Stepping::Sampled
        },
        regenerate: cfg.modes.regenerate,
        sync_retry: cfg.modes.sync_retry,
        hold_reserved: cfg.modes.hold_reserved,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn build_virtual(
    g: &Arc<PhysicalGraph>,
    rc: Option<&RecursiveConstruction>,
    strategy: StrategyKind,
    d_th: u32,
    cap: u32,
    alpha: f64,
    wraparound: bool,
    graph_seed: u64,
) -> Result<VirtualGraph> {
    match strategy {
        StrategyKind::Deterministic => match g.kind() {
            GraphKind::Ring { .. } => build_deterministic_ring(g.clone(), d_th, cap),
            GraphKind::Grid { .. } => build_deterministic_grid(g.clone(), d_th, cap, wraparound),
            GraphKind::Recursive { .. } => Err(Error::Unsupported(
                "use the recursive strategy on RRGGs".into(),
            )),
        },
        StrategyKind::Uniform => sample_random_virtual(
            g.clone(),
            NeighborDistribution::Uniform,
            d_th,
            cap,
            graph_seed,
        ),
        StrategyKind::PowerLaw => sample_random_virtual(
            g.clone(),
            NeighborDistribution::PowerLaw { alpha },
            d_th,
            cap,
            graph_seed,
        ),
        StrategyKind::OnDemand => build_on_demand(g.clone(), cap),
        StrategyKind::Recursive => {
            let rc =
                rc.ok_or_else(|| Error::Unsupported("recursive strategy needs an RRGG".into()))?;
            build_recursive_virtual(g.clone(), rc, d_th, cap)
        }
    }
}

/// Runs one batch of demands on a fresh copy of `template`.
#[allow(clippy::too_many_arguments)]
pub fn run_demands(
    template: &VirtualGraph,
    life: Lifecycle,
    demands: &DemandMatrix,
    algorithm: Algorithm,
    p: f64,
    max_steps: Time,
    trial_seed: u64,
    trace: bool,
) -> Result<(TrialResult, SimOutput)> {
    let mut vg = template.fresh(seed::derive(trial_seed, &[seed::TAG_LIFE]));
    vg.set_lifecycle(life);
    let ds = demands.demands();
    let params = SimParams {
        algorithm,
        p,
        max_steps,
        sync_seed: trial_seed,
        trace,
    };
    let out = sim::Simulation::new(&mut vg, &ds, params).run()?;
    let requested: Vec<u32> = ds.iter().map(|d| d.requested).collect();
    let tr = TrialResult::from_outcomes(out.outcomes.clone(), &requested);
    if ds.len() == 1 && vg.strategy() != crate::overlay::Strategy::OnDemand {
        check_single_demand_bound(&vg, &out)?;
    }
    Ok((tr, out))
}

/// A lone demand's control traffic never exceeds two traversals of a
/// greedy path per discovery, and a greedy path is at most
/// (longest link) x (diameter) long.
fn check_single_demand_bound(vg: &VirtualGraph, out: &SimOutput) -> Result<()> {
    let o = &out.outcomes[0];
    if o.censored {
        return Ok(());
    }
    let longest = vg
        .pools()
        .iter()
        .map(|p| p.pair_distance)
        .max()
        .unwrap_or(1) as u64;
    let discoveries = (o.rounds_used + o.restarts) as u64;
    let bound = 2 * longest * vg.physical().diameter() as u64 * discoveries;
    let control = o.latency_steps - out.waited[0];
    if control > bound {
        return Err(Error::ProtocolViolation(format!(
            "single-demand control latency {control} exceeds bound {bound}"
        )));
    }
    Ok(())
}

/// One trial of the first grid point of `cfg` (first strategy, d_th,
/// algorithm and |D|).
pub fn run_trial(cfg: &ExperimentConfig, trial_seed: u64) -> Result<TrialResult> {
    cfg.validate()?;
    let (g, rc) = build_physical(&cfg.topology)?;
    let strategy = cfg.overlay.strategies[0];
    let d_th = cfg.overlay.d_th[0];
    let vg = build_virtual(
        &g,
        rc.as_ref(),
        strategy,
        d_th,
        cfg.overlay.cap,
        cfg.alpha(),
        cfg.modes.grid_wraparound,
        seed::derive(trial_seed, &[seed::TAG_GRAPH]),
    )?;
    let count = cfg.demand.counts[0];
    let dm = sample_demand_matrix(
        &g,
        count,
        cfg.demand.range,
        cfg.demand.min_pair_distance.resolve(d_th),
        seed::derive(trial_seed, &[seed::TAG_DEMAND]),
    )?;
    let alg = if strategy == StrategyKind::OnDemand {
        Algorithm::ShortestPath
    } else {
        cfg.routing.algorithms[0]
    };
    let np = cfg.noise.resolve()?;
    Ok(run_demands(
        &vg,
        lifecycle_for(cfg)?,
        &dm,
        alg,
        np.p,
        cfg.max_steps,
        trial_seed,
        false,
    )?
    .0)
}

// ---------------------------------------------------------------------------
// experiments

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// worker pool; `jobs = None` uses every core. Runs sequentially when
    /// the crate is built without the `parallel` feature.
    #[default]
    Parallel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub topology: String,
    pub strategy: String,
    pub algorithm: String,
    pub d_th: u32,
    pub cap: u32,
    pub n_demands: usize,
    pub mean_al: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub mean_swaps: f64,
    pub mean_fidelity_bound: f64,
    pub n_censored: usize,
    pub n_errors: usize,
    /// per-trial AL values, in trial order (not written to the results file)
    pub samples: Vec<f64>,
}

pub const RESULT_COLUMNS: [&str; 14] = [
    "scenario",
    "topology",
    "strategy",
    "algorithm",
    "d_th",
    "cap",
    "n_demands",
    "mean_AL",
    "stderr",
    "n_samples",
    "mean_swaps",
    "mean_fidelity_bound",
    "n_censored",
    "n_errors",
];

impl ResultRow {
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{}\t{:.4}\t{:.6}\t{}\t{}",
            self.scenario,
            self.topology,
            self.strategy,
            self.algorithm,
            self.d_th,
            self.cap,
            self.n_demands,
            self.mean_al,
            self.stderr,
            self.n_samples,
            self.mean_swaps,
            self.mean_fidelity_bound,
            self.n_censored,
            self.n_errors
        )
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResults {
    pub config: ExperimentConfig,
    pub rows: Vec<ResultRow>,
}

pub const CONFIG_BEGIN: &str = "# --- config ---";
pub const CONFIG_END: &str = "# --- end config ---";

impl ExperimentResults {
    pub fn row(
        &self,
        strategy: &str,
        algorithm: &str,
        d_th: u32,
        n_demands: usize,
    ) -> Option<&ResultRow> {
        self.rows.iter().find(|r| {
            r.strategy == strategy
                && r.algorithm == algorithm
                && r.d_th == d_th
                && r.n_demands == n_demands
        })
    }

    /// Results file: provenance header (the full config as commented TOML)
    /// followed by a tab-separated table.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# qnet-route {} results", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "{CONFIG_BEGIN}");
        // where the file lands is not part of the experiment
        let cfg = ExperimentConfig {
            output: None,
            ..self.config.clone()
        };
        for line in cfg.to_toml().lines() {
            if line.is_empty() {
                let _ = writeln!(s, "#");
            } else {
                let _ = writeln!(s, "# {line}");
            }
        }
        let _ = writeln!(s, "{CONFIG_END}");
        let _ = writeln!(s, "{}", RESULT_COLUMNS.join("\t"));
        for r in &self.rows {
            let _ = writeln!(s, "{}", r.to_line());
        }
        s
    }
}

/// Recovers the config from a results file header.
pub fn parse_provenance(text: &str) -> Result<ExperimentConfig> {
    let mut inside = false;
    let mut body = String::new();
    for line in text.lines() {
        if line == CONFIG_BEGIN {
            inside = true;
            continue;
        }
        if line == CONFIG_END {
            return ExperimentConfig::from_toml(&body);
        }
        if inside {
            let l = line.strip_prefix('#').unwrap_or(line);
            body.push_str(l.strip_prefix(' ').unwrap_or(l));
            body.push('\n');
        }
    }
    Err(Error::Config("no provenance header found".into()))
}

pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

/// Caps the worker pool used by [`Execution::Parallel`]. Only the first
/// call has an effect.
pub fn configure_workers(jobs: usize) -> Result<()> {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
        Ok(())
    }
}

/// Maps `f` over `0..n`, keeping index order whatever the execution mode.
pub fn map_indexed<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

struct Point {
    strategy: StrategyKind,
    algorithm: Algorithm,
    d_th: u32,
    count: usize,
}

/// Runs the full grid of `cfg`: for every (d_th, strategy, algorithm, |D|)
/// point, graph samples x demand samples trials.
pub fn run_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<ExperimentResults> {
    cfg.validate()?;
    let (g, rc) = build_physical(&cfg.topology)?;
    let life = lifecycle_for(cfg)?;
    let np = cfg.noise.resolve()?;
    let base = cfg.seed;
    let mut rows = Vec::new();

    for &d_th in &cfg.overlay.d_th {
        for &strategy in &cfg.overlay.strategies {
            let n_graphs = if strategy.is_random() {
                cfg.samples.graph
            } else {
                1
            };
            let graphs: Vec<VirtualGraph> = (0..n_graphs)
                .map(|gi| {
                    build_virtual(
                        &g,
                        rc.as_ref(),
                        strategy,
                        d_th,
                        cfg.overlay.cap,
                        cfg.alpha(),
                        cfg.modes.grid_wraparound,
                        seed::derive(base, &[seed::TAG_GRAPH, d_th as u64, gi as u64]),
                    )
                })
                .collect::<Result<_>>()?;
            let algorithms: Vec<Algorithm> = if strategy == StrategyKind::OnDemand {
                vec![Algorithm::ShortestPath]
            } else {
                cfg.routing.algorithms.clone()
            };
            for &algorithm in &algorithms {
                for &count in &cfg.demand.counts {
                    let pt = Point {
                        strategy,
                        algorithm,
                        d_th,
                        count,
                    };
                    rows.push(run_point(cfg, &g, &graphs, &pt, life, np.p, exec)?);
                }
            }
        }
    }
    Ok(ExperimentResults {
        config: cfg.clone(),
        rows,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_point(
    cfg: &ExperimentConfig,
    g: &Arc<PhysicalGraph>,
    graphs: &[VirtualGraph],
    pt: &Point,
    life: Lifecycle,
    p: f64,
    exec: Execution,
) -> Result<ResultRow> {
    let k = cfg.samples.demand;
    let n = graphs.len() * k;
    let min_d = cfg.demand.min_pair_distance.resolve(pt.d_th);
    // feasibility is a config error, not a per-trial one
    sample_demand_matrix(g, pt.count, cfg.demand.range, min_d, 0)?;
    let base = cfg.seed;
    let trials: Vec<Result<TrialResult>> = map_indexed(n, exec, |idx| {
        let (gi, ki) = (idx / k, idx % k);
        let tags = [pt.count as u64, gi as u64, ki as u64];
        let dm = sample_demand_matrix(
            g,
            pt.count,
            cfg.demand.range,
            min_d,
            seed::derive(
                base,
                &[seed::TAG_DEMAND, tags[0], tags[1], tags[2], min_d as u64],
            ),
        )?;
        let trial_seed = seed::derive(base, &[seed::TAG_LIFE, tags[0], tags[1], tags[2]]);
        run_demands(
            &graphs[gi],
            life,
            &dm,
            pt.algorithm,
            p,
            cfg.max_steps,
            trial_seed,
            false,
        )
        .map(|r| r.0)
    });

    let mut al = Vec::with_capacity(n);
    let mut swaps = Vec::with_capacity(n);
    let mut fid = Vec::with_capacity(n);
    let (mut censored, mut errors) = (0, 0);
    for t in &trials {
        match t {
            Ok(tr) => {
                censored += tr.censored;
                if let (Some(a), Some(s), Some(f)) = (tr.al, tr.mean_swaps, tr.mean_fidelity_bound)
                {
                    al.push(a);
                    swaps.push(s);
                    fid.push(f);
                }
            }
            Err(_) => errors += 1,
        }
    }
    let (mean_al, stderr) = mean_stderr(&al);
    Ok(ResultRow {
        scenario: cfg.scenario.clone(),
        topology: g.kind().label(),
        strategy: pt.strategy.label().to_string(),
        algorithm: pt.algorithm.label().to_string(),
        d_th: pt.d_th,
        cap: cfg.overlay.cap,
        n_demands: pt.count,
        mean_al,
        stderr,
        n_samples: al.len(),
        mean_swaps: mean_stderr(&swaps).0,
        mean_fidelity_bound: mean_stderr(&fid).0,
        n_censored: censored,
        n_errors: errors,
        samples: al,
    })
}

#[cfg(test)]
mod tests;
