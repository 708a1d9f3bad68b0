use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qnet_route::analysis::{self, Report, ScalingCell, VerifyPlan};
use qnet_route::config::{ExperimentConfig, DEFAULT_T_TH};
use qnet_route::engine::{self, Execution};
use qnet_route::physics::{derive_t_threshold, step_duration_seconds, window_success_prob};
use qnet_route::{scenario, Error};

/// Entanglement routing experiments over pre-shared virtual graphs.
#[derive(Parser)]
#[command(name = "qnet-route", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a preset scenario or a config file and write a results file
    Run(RunArgs),
    /// Run analytical checks and print a report
    Verify(VerifyArgs),
    /// Print storage threshold, window success probabilities and step length
    DeriveParams(DeriveArgs),
    /// List preset scenarios
    ListScenarios,
    /// Print the physical or virtual graph of a scenario as an edge list
    Dump(DumpArgs),
}

#[derive(Args)]
struct RunArgs {
    /// preset name (see list-scenarios)
    #[arg(conflicts_with = "config", required_unless_present = "config")]
    scenario: Option<String>,
    /// TOML config file
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// results file; defaults to <scenario>.tsv in the output directory
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long, env = "QNET_ROUTE_OUT", default_value = ".")]
    out_dir: PathBuf,
    /// 10000 demand samples x 100 graph samples
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    demand_samples: Option<usize>,
    #[arg(long)]
    graph_samples: Option<usize>,
    /// worker threads (default: all cores)
    #[arg(long, short)]
    jobs: Option<usize>,
    /// run trials one after another
    #[arg(long)]
    sequential: bool,
    /// print the config that would run and exit
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// all, table1, mincut, phases, fidelity or rrgg
    #[arg(default_value = "all")]
    check: String,
    /// single scaling cell for table1, e.g. det-ring-greedy
    #[arg(long)]
    cell: Option<String>,
    /// full-size grids (slow)
    #[arg(long)]
    full: bool,
    #[arg(long, default_value_t = scenario::DEFAULT_SEED)]
    seed: u64,
    #[arg(long, short)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct DeriveArgs {
    #[arg(long, default_value_t = 0.9993)]
    p: f64,
    #[arg(long, default_value_t = 0.8)]
    f_th: f64,
    #[arg(long, default_value_t = 0.0003)]
    p0: f64,
    /// storage threshold to evaluate the window probabilities at
    #[arg(long, default_value_t = DEFAULT_T_TH)]
    t_th: u64,
    #[arg(long, default_value_t = 10.0)]
    dist_km: f64,
}

#[derive(Args)]
struct DumpArgs {
    scenario: String,
    /// virtual graph (first strategy and d_th) instead of the physical one
    #[arg(long = "virtual")]
    overlay: bool,
}

enum Failure {
    Usage(String),
    Validation(String),
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) => Failure::Usage(e.to_string()),
            Error::ProtocolViolation(_) => Failure::Verification(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let res = match cli.cmd {
        Cmd::Run(a) => run(a),
        Cmd::Verify(a) => verify(a),
        Cmd::DeriveParams(a) => derive(a),
        Cmd::ListScenarios => list(),
        Cmd::Dump(a) => dump(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Validation(m)) => {
            eprintln!("invalid configuration: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Verification(m)) => {
            eprintln!("verification failed: {m}");
            ExitCode::from(3)
        }
    }
}

fn load(a: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match (&a.scenario, &a.config) {
        (Some(name), None) => scenario::find(name)?.config,
        (None, Some(path)) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::from_toml(&text)?
        }
        _ => return Err(Failure::Usage("give a scenario name or --config".into())),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.paper_scale {
        scenario::paper_scale(&mut cfg);
    }
    if let Some(n) = a.demand_samples {
        cfg.samples.demand = n;
    }
    if let Some(n) = a.graph_samples {
        cfg.samples.graph = n;
    }
    if let Some(o) = &a.out {
        cfg.output = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn workers(jobs: Option<usize>) -> CliResult {
    if let Some(j) = jobs {
        if j == 0 {
            return Err(Failure::Usage("--jobs must be at least 1".into()));
        }
        engine::configure_workers(j)?;
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, text)
        .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn run(a: RunArgs) -> CliResult {
    let cfg = load(&a)?;
    if a.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    workers(a.jobs)?;
    let exec = if a.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let res = engine::run_experiment(&cfg, exec)?;
    let path = cfg
        .output
        .clone()
        .unwrap_or_else(|| a.out_dir.join(format!("{}.tsv", cfg.scenario)));
    write_file(&path, &res.to_tsv())?;
    let errors: usize = res.rows.iter().map(|r| r.n_errors).sum();
    let censored: usize = res.rows.iter().map(|r| r.n_censored).sum();
    eprintln!("wrote {} rows to {}", res.rows.len(), path.display());
    if errors + censored > 0 {
        eprintln!("note: {errors} failed trials, {censored} demands hit the step ceiling");
    }
    Ok(())
}

fn verify(a: VerifyArgs) -> CliResult {
    workers(a.jobs)?;
    let plan = if a.full {
        VerifyPlan::full(a.seed)
    } else {
        VerifyPlan::quick(a.seed)
    };
    let exec = Execution::Parallel;
    let mut rep = Report::default();
    match a.check.as_str() {
        "all" => rep = analysis::run_verification(&plan, exec)?,
        "table1" => match &a.cell {
            Some(c) => analysis::scaling_checks(&mut rep, ScalingCell::parse(c)?, &plan, exec)?,
            None => {
                for cell in ScalingCell::ring_cells() {
                    analysis::scaling_checks(&mut rep, cell, &plan, exec)?;
                }
            }
        },
        "mincut" => analysis::mincut_checks(&mut rep, &plan)?,
        "phases" => analysis::phase_checks(&mut rep, &plan)?,
        "fidelity" => analysis::fidelity_checks(&mut rep, &plan)?,
        "rrgg" => analysis::rrgg_checks(&mut rep, &plan)?,
        other => {
            return Err(Failure::Usage(format!(
                "unknown check '{other}' (all, table1, mincut, phases, fidelity, rrgg)"
            )))
        }
    }
    print!("{}", rep.to_text());
    let failed: Vec<&str> = rep
        .checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(failed.join(", ")))
    }
}

fn derive(a: DeriveArgs) -> CliResult {
    let derived = derive_t_threshold(a.p, a.f_th)?;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "p\t{}", a.p);
    let _ = writeln!(out, "f_th\t{}", a.f_th);
    let _ = writeln!(out, "p0\t{}", a.p0);
    match derived {
        Some(t) => {
            let _ = writeln!(out, "t_th_derived\t{t}");
        }
        None => {
            let _ = writeln!(out, "t_th_derived\tunbounded (no storage decay)");
        }
    }
    let _ = writeln!(out, "t_th_used\t{}", a.t_th);
    if let Some(t) = derived {
        if t != a.t_th {
            let _ = writeln!(
                out,
                "# note: the storage formula gives {t} steps; the window probabilities below use {} steps \
                 (the value the figure experiments assume)",
                a.t_th
            );
        }
    }
    if !(a.p0 > 0.0 && a.p0 <= 1.0) {
        return Err(Failure::Validation(format!(
            "p0 must lie in (0, 1], got {}",
            a.p0
        )));
    }
    if a.dist_km.is_nan() || a.dist_km <= 0.0 {
        return Err(Failure::Validation("dist_km must be positive".into()));
    }
    let _ = writeln!(out, "d\twindow_success");
    for d in 1..=8 {
        let _ = writeln!(out, "{d}\t{:.7}", window_success_prob(a.p0, a.t_th, d));
    }
    let _ = writeln!(out, "step_seconds\t{:e}", step_duration_seconds(a.dist_km));
    Ok(())
}

fn list() -> CliResult {
    for p in scenario::presets() {
        println!("{}\tfig{}\t{}", p.name, p.figure, p.description);
    }
    Ok(())
}

fn dump(a: DumpArgs) -> CliResult {
    let cfg = scenario::find(&a.scenario)?.config;
    let (g, rc) = engine::build_physical(&cfg.topology)?;
    if !a.overlay {
        print!("{}", g.dump());
        return Ok(());
    }
    let vg = engine::build_virtual(
        &g,
        rc.as_ref(),
        cfg.overlay.strategies[0],
        cfg.overlay.d_th[0],
        cfg.overlay.cap,
        cfg.alpha(),
        cfg.modes.grid_wraparound,
        qnet_route::seed::derive(
            cfg.seed,
            &[qnet_route::seed::TAG_GRAPH, cfg.overlay.d_th[0] as u64, 0],
        ),
    )?;
    print!("{}", vg.dump());
    Ok(())
}
