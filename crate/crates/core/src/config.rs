//! Experiment configuration, as read from and written to TOML.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{derive_t_threshold, NoiseParams};
use crate::routing::Algorithm;

/// Storage threshold used when none is configured; the value the figure
/// experiments were run with.
pub const DEFAULT_T_TH: u64 = 1000;
pub const DEFAULT_MAX_STEPS: u64 = 100_000_000;
pub const DESK_DEMAND_SAMPLES: usize = 1000;
pub const DESK_GRAPH_SAMPLES: usize = 20;
pub const PAPER_DEMAND_SAMPLES: usize = 10_000;
pub const PAPER_GRAPH_SAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub seed: u64,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub topology: TopologySpec,
    #[serde(rename = "virtual")]
    pub overlay: OverlaySpec,
    pub routing: RoutingSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub demand: DemandSpec,
    #[serde(default)]
    pub samples: SampleSpec,
    #[serde(default)]
    pub modes: Modes,
}

fn default_max_steps() -> u64 {
    DEFAULT_MAX_STEPS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TopologySpec {
    Ring { n: u32 },
    Grid { rows: u32, cols: u32 },
    Rrgg { base_n: u32, level: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Deterministic,
    Uniform,
    PowerLaw,
    OnDemand,
    Recursive,
}

impl StrategyKind {
    pub fn label(&self) -> &'static str {
        match self {
            StrategyKind::Deterministic => "deterministic",
            StrategyKind::Uniform => "uniform",
            StrategyKind::PowerLaw => "power-law",
            StrategyKind::OnDemand => "on-demand",
            StrategyKind::Recursive => "recursive",
        }
    }

    pub fn is_random(&self) -> bool {
        matches!(self, StrategyKind::Uniform | StrategyKind::PowerLaw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlaySpec {
    pub strategies: Vec<StrategyKind>,
    /// power-law exponent; defaults to 1 on rings and 2 on grids
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub d_th: Vec<u32>,
    pub cap: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingSpec {
    pub algorithms: Vec<Algorithm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub p: f64,
    pub f_th: f64,
    pub p0: f64,
    /// explicit storage threshold; derived from `p` and `f_th` when absent
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_th: Option<u64>,
    pub dist_phys_km: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            p: 0.9993,
            f_th: 0.8,
            p0: 0.0003,
            t_th: Some(DEFAULT_T_TH),
            dist_phys_km: 10.0,
        }
    }
}

impl NoiseSpec {
    pub fn resolve(&self) -> Result<NoiseParams> {
        let t_th = match self.t_th {
            Some(t) => t,
            None => derive_t_threshold(self.p, self.f_th)?.unwrap_or(u64::MAX),
        };
        let np = NoiseParams {
            p: self.p,
            f_th: self.f_th,
            p0: self.p0,
            t_th,
        };
        np.validate()?;
        if self.dist_phys_km.is_nan() || self.dist_phys_km <= 0.0 {
            return Err(Error::InvalidParameter(
                "dist_phys_km must be positive".into(),
            ));
        }
        Ok(np)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MinDistance {
    Hops(u32),
    Relative(RelativeDistance),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelativeDistance {
    #[serde(rename = "d_th")]
    DTh,
}

impl MinDistance {
    pub fn resolve(&self, d_th: u32) -> u32 {
        match self {
            MinDistance::Hops(h) => *h,
            MinDistance::Relative(RelativeDistance::DTh) => d_th,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSpec {
    /// |D| grid
    pub counts: Vec<usize>,
    /// inclusive range of requested pairs per entry
    pub range: [u32; 2],
    pub min_pair_distance: MinDistance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    pub demand: usize,
    pub graph: usize,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            demand: DESK_DEMAND_SAMPLES,
            graph: DESK_GRAPH_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Modes {
    /// links never expire
    pub freeze_expiry: bool,
    /// generation windows aligned on the global clock
    pub global_window: bool,
    /// deterministic grid offsets wrap around
    pub grid_wraparound: bool,
    /// consumed links are regenerated
    pub regenerate: bool,
    /// per-step Bernoulli generation instead of sampled ready times
    pub stepwise: bool,
    /// restarted rounds generate the whole path in one window
    pub sync_retry: bool,
    /// reserved links are held until consumed instead of aging out
    pub hold_reserved: bool,
}

impl Default for Modes {
    fn default() -> Self {
        Modes {
            freeze_expiry: false,
            global_window: false,
            grid_wraparound: false,
            regenerate: true,
            stepwise: false,
            sync_retry: false,
            hold_reserved: false,
        }
    }
}

fn bad<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

impl ExperimentConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn alpha(&self) -> f64 {
        self.overlay.alpha.unwrap_or(match self.topology {
            TopologySpec::Grid { .. } => 2.0,
            _ => 1.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self.topology {
            TopologySpec::Ring { n } if n < 3 => return bad("ring needs n >= 3"),
            TopologySpec::Grid { rows, cols } if rows < 2 || cols < 2 => {
                return bad("grid sides must be >= 2")
            }
            TopologySpec::Rrgg { base_n, .. } if base_n < 4 || base_n % 2 != 0 => {
                return bad("rrgg base ring must be even and >= 4")
            }
            _ => {}
        }
        if self.overlay.strategies.is_empty() {
            return bad("no strategies given");
        }
        if self.overlay.d_th.is_empty() || self.overlay.d_th.contains(&0) {
            return bad("d_th values must be >= 1");
        }
        if self.overlay.cap == 0 {
            return bad("cap must be >= 1");
        }
        for s in &self.overlay.strategies {
            match (s, &self.topology) {
                (StrategyKind::Recursive, TopologySpec::Rrgg { .. }) => {}
                (StrategyKind::Recursive, _) => {
                    return bad("recursive strategy needs an rrgg topology")
                }
                (StrategyKind::OnDemand, _) => {}
                (_, TopologySpec::Rrgg { .. }) => {
                    return bad("rrgg topology supports recursive and on-demand only")
                }
                _ => {}
            }
            if s.is_random() && self.overlay.d_th.iter().any(|&d| d < 2) {
                return bad("random strategies need d_th >= 2");
            }
        }
        if let Some(a) = self.overlay.alpha {
            if !(a.is_finite() && a >= 0.0) {
                return bad("alpha must be finite and >= 0");
            }
        }
        if self.routing.algorithms.is_empty() {
            return bad("no algorithms given");
        }
        self.noise.resolve()?;
        let [lo, hi] = self.demand.range;
        if lo == 0 || lo > hi {
            return bad(format!("demand range [{lo}, {hi}] is empty or includes 0"));
        }
        if self.demand.counts.is_empty() {
            return bad("no demand counts given");
        }
        if self.samples.demand == 0 || self.samples.graph == 0 {
            return bad("sample counts must be >= 1");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be >= 1");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
scenario = "t"
seed = 4

[topology]
kind = "grid"
rows = 5
cols = 5

[virtual]
strategies = ["power-law", "on-demand"]
d_th = [4]
cap = 4

[routing]
algorithms = ["greedy", "modified-greedy"]

[demand]
counts = [1, 2]
range = [2, 4]
min_pair_distance = "d_th"
"#;

    #[test]
    fn parse_defaults_and_round_trip() {
        let c = ExperimentConfig::from_toml(SAMPLE).unwrap();
        c.validate().unwrap();
        assert_eq!(c.alpha(), 2.0);
        assert_eq!(c.noise.t_th, Some(1000));
        assert_eq!(c.samples.demand, 1000);
        assert_eq!(c.routing.algorithms[0], Algorithm::ClassicalGreedy);
        assert_eq!(c.demand.min_pair_distance.resolve(4), 4);
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = ExperimentConfig::from_toml(SAMPLE).unwrap();
        c.demand.range = [0, 2];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::from_toml(SAMPLE).unwrap();
        c.noise.f_th = 0.2;
        assert!(c.validate().is_err());
        assert!(ExperimentConfig::from_toml("scenario = 1").is_err());
        let derived = NoiseSpec {
            t_th: None,
            ..NoiseSpec::default()
        }
        .resolve()
        .unwrap();
        assert_eq!(derived.t_th, 221);
    }
}
