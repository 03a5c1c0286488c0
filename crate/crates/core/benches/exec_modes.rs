//! Sequential versus rayon execution of the data-parallel stages.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use fixalm_core::designer::estimate_g;
use fixalm_core::harness::admm::{consensus_admm_driver, oracle_subsolver, AdmmOptions};
use fixalm_core::harness::num::{gen_feasible, NumParams};
use fixalm_core::harness::table::{build_workload, design_for, run_row, TableConfig, Workload};
use fixalm_core::fxp::OverflowPolicy;
use fixalm_core::par::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn workload() -> (TableConfig, Workload) {
    let cfg = TableConfig {
        instances: 8,
        samples: 2000,
        ..TableConfig::default()
    };
    let work = build_workload(&cfg).expect("workload");
    (cfg, work)
}

fn bench_gradient_sampling(c: &mut Criterion) {
    let (_, work) = workload();
    let problem = &work.instances[0];
    let mut group = c.benchmark_group("estimate_g");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| estimate_g(black_box(problem), 20_000, 1.5, 0, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_instance_batch(c: &mut Criterion) {
    let (cfg, work) = workload();
    let design = design_for(&work, &cfg, 1.0).expect("design");
    let mut group = c.benchmark_group("fixed_alm_batch");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| run_row(black_box(&work), &design, OverflowPolicy::Strict, exec))
        });
    }
    group.finish();
}

fn bench_admm_round(c: &mut Criterion) {
    let num = gen_feasible(NumParams::default(), 7, 100).expect("network");
    let mut group = c.benchmark_group("admm_round");
    group.sample_size(10);
    for (name, exec) in MODES {
        let opts = AdmmOptions {
            rounds: 1,
            exec,
            ..AdmmOptions::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, opts| {
            b.iter(|| consensus_admm_driver(black_box(&num), opts, oracle_subsolver).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_gradient_sampling, bench_instance_batch, bench_admm_round);
criterion_main!(benches);
