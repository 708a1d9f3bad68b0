use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use qnet_route::analysis::{verify_table1_scaling, ScalingCell};
use qnet_route::engine::{run_experiment, Execution};
use qnet_route::scenario;

fn small_sweep() -> qnet_route::config::ExperimentConfig {
    let mut cfg = scenario::find("fig5-ring-det").unwrap().config;
    cfg.samples.demand = 40;
    cfg.samples.graph = 4;
    cfg.demand.counts = vec![1, 4, 16];
    cfg
}

fn sweep(c: &mut Criterion) {
    let cfg = small_sweep();
    let mut g = c.benchmark_group("fig5-sweep");
    g.sample_size(10);
    for (name, exec) in [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel),
    ] {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_experiment(&cfg, exec).unwrap())
        });
    }
    g.finish();
}

fn scaling(c: &mut Criterion) {
    let cell = ScalingCell::ring_cells()[0];
    let mut g = c.benchmark_group("table1-cell");
    g.sample_size(10);
    for (name, exec) in [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel),
    ] {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| verify_table1_scaling(cell, &[64, 128], &[4, 8], 500, 7, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, sweep, scaling);
criterion_main!(benches);
