//! Sequential against parallel execution for the two hot loops: Monte Carlo
//! replications and the cross-validation grid.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use essreg::cv::{cv_select_delta, DeltaGrid};
use essreg::simulation::{generate_truth, run_experiment, sample_dataset, DeltaChoice, DgpConfig, ExperimentConfig};
use essreg::{center, Execution};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn replications(c: &mut Criterion) {
    let mut group = c.benchmark_group("replications");
    group.sample_size(10);
    for (name, exec) in MODES {
        let mut cfg = ExperimentConfig::new(DgpConfig::standard(200, 100, 5, 4), 16);
        cfg.delta = DeltaChoice::Rate(3.0);
        cfg.exec = exec;
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| black_box(run_experiment(cfg).unwrap().aggregate.mean_k_hat))
        });
    }
    group.finish();
}

fn cv_grid(c: &mut Criterion) {
    let truth = generate_truth(&DgpConfig::standard(400, 200, 10, 5)).unwrap();
    let data = center(&sample_dataset(&truth, 400, 1).unwrap().0);
    let grid = DeltaGrid::default_for(data.n(), data.p());
    let mut group = c.benchmark_group("cv_grid");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(cv_select_delta(&data, &grid, 0, exec).map(|r| r.chosen_delta).ok()))
        });
    }
    group.finish();
}

criterion_group!(benches, replications, cv_grid);
criterion_main!(benches);
