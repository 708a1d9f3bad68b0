//! Preset experiments, one family per published figure.

use crate::config::{
    DemandSpec, ExperimentConfig, MinDistance, Modes, NoiseSpec, OverlaySpec, RelativeDistance,
    RoutingSpec, SampleSpec, StrategyKind, TopologySpec, DEFAULT_MAX_STEPS, PAPER_DEMAND_SAMPLES,
    PAPER_GRAPH_SAMPLES,
};
use crate::error::{Error, Result};
use crate::routing::Algorithm;

pub const DEFAULT_SEED: u64 = 20_190_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: String,
    pub figure: u32,
    pub description: &'static str,
    pub config: ExperimentConfig,
}

const RING: TopologySpec = TopologySpec::Ring { n: 32 };
const GRID: TopologySpec = TopologySpec::Grid { rows: 5, cols: 5 };
const COUNTS: [usize; 6] = [1, 2, 4, 8, 16, 32];

fn base(
    name: &str,
    topology: TopologySpec,
    strategies: Vec<StrategyKind>,
    algorithms: Vec<Algorithm>,
) -> ExperimentConfig {
    ExperimentConfig {
        scenario: name.to_string(),
        seed: DEFAULT_SEED,
        max_steps: DEFAULT_MAX_STEPS,
        output: None,
        topology,
        overlay: OverlaySpec {
            strategies,
            alpha: None,
            d_th: vec![2, 4],
            cap: 1,
        },
        routing: RoutingSpec { algorithms },
        noise: NoiseSpec::default(),
        demand: DemandSpec {
            counts: COUNTS.to_vec(),
            range: [1, 1],
            min_pair_distance: MinDistance::Hops(1),
        },
        samples: SampleSpec::default(),
        modes: Modes {
            hold_reserved: true,
            ..Modes::default()
        },
    }
}

fn all_algorithms() -> Vec<Algorithm> {
    Algorithm::PATH_DISCOVERY.to_vec()
}

fn continuous_pair() -> Vec<Algorithm> {
    vec![Algorithm::ModifiedGreedy, Algorithm::LocalBestEffort]
}

fn with_on_demand(s: StrategyKind) -> Vec<StrategyKind> {
    vec![s, StrategyKind::OnDemand]
}

pub fn presets() -> Vec<Preset> {
    use StrategyKind::*;
    let mut out = Vec::new();
    let mut add =
        |name: String, figure: u32, description: &'static str, config: ExperimentConfig| {
            out.push(Preset {
                name,
                figure,
                description,
                config,
            });
        };

    for (topo, tname) in [(RING, "ring"), (GRID, "grid")] {
        for (s, sname) in [
            (Deterministic, "det"),
            (PowerLaw, "power"),
            (Uniform, "uniform"),
        ] {
            let name = format!("fig5-{tname}-{sname}");
            let cfg = base(&name, topo, vec![s], all_algorithms());
            add(
                name,
                5,
                "algorithm comparison, one pair per demand, cap 1",
                cfg,
            );
        }
    }

    for (topo, tname) in [(RING, "ring"), (GRID, "grid")] {
        let all = vec![Deterministic, PowerLaw, Uniform, OnDemand];

        let name = format!("fig6-cap4dem2-{tname}");
        let mut cfg = base(&name, topo, all.clone(), continuous_pair());
        cfg.overlay.cap = 4;
        cfg.demand.range = [1, 2];
        add(name, 6, "cap 4, at most two pairs per demand", cfg);

        let name = format!("fig7-cap4dem4-{tname}");
        let mut cfg = base(&name, topo, all.clone(), continuous_pair());
        cfg.overlay.cap = 4;
        cfg.demand.range = [2, 4];
        add(name, 7, "cap 4, two to four pairs per demand", cfg);

        let name = format!("fig8-longdist-{tname}");
        let mut cfg = base(&name, topo, all, continuous_pair());
        cfg.overlay.cap = 4;
        cfg.demand.range = [2, 4];
        cfg.demand.min_pair_distance = MinDistance::Relative(RelativeDistance::DTh);
        add(
            name,
            8,
            "cap 4, two to four pairs, endpoints at least d_th apart",
            cfg,
        );
    }

    let mut cfg = base(
        "fig9-non",
        RING,
        vec![Deterministic, PowerLaw, Uniform],
        all_algorithms(),
    );
    cfg.overlay.d_th = vec![4];
    add(
        "fig9-non".into(),
        9,
        "two-hop lookahead against the one-hop rules",
        cfg,
    );

    for (level, figure, name) in [(0, 10, "fig10-rrgg-l0"), (1, 11, "fig11-rrgg-l1")] {
        let mut cfg = base(
            name,
            TopologySpec::Rrgg { base_n: 8, level },
            with_on_demand(Recursive),
            continuous_pair(),
        );
        cfg.overlay.d_th = vec![2];
        cfg.demand.counts = vec![1, 2, 4, 8];
        add(
            name.into(),
            figure,
            "recursively generated graph over an 8-ring",
            cfg,
        );
    }
    out
}

pub fn find(name: &str) -> Result<Preset> {
    presets()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| {
            let names: Vec<String> = presets().into_iter().map(|p| p.name).collect();
            Error::Config(format!(
                "unknown scenario '{name}' (known: {})",
                names.join(", ")
            ))
        })
}

/// Paper-scale sample counts.
pub fn paper_scale(cfg: &mut ExperimentConfig) {
    cfg.samples = SampleSpec {
        demand: PAPER_DEMAND_SAMPLES,
        graph: PAPER_GRAPH_SAMPLES,
    };
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for p in presets() {
            p.config
                .validate()
                .unwrap_or_else(|e| panic!("{}: {e}", p.name));
            assert_eq!(
                ExperimentConfig::from_toml(&p.config.to_toml()).unwrap(),
                p.config,
                "{}",
                p.name
            );
            assert_eq!(p.config.scenario, p.name);
        }
    }

    #[test]
    fn lookup() {
        assert_eq!(find("fig9-non").unwrap().figure, 9);
        assert!(find("fig99").is_err());
    }
}
