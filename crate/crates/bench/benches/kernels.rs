use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use csbm_bench::instance;
use csbm_core::recovery::{fit_correlation_matrix, DEFAULT_MAX_ITERS, DEFAULT_TOL, DELTA_PRIME_INIT};
use csbm_core::*;

fn sampling(c: &mut Criterion) {
    let mut g = c.benchmark_group("sample_instance");
    for n in [500, 2000] {
        let params = ModelParams::with_gamma(0.8, 0.8, 3.0, n, 1.0).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &params, |b, p| b.iter(|| sample_instance(p, black_box(1))));
    }
    g.finish();
}

fn cycles(c: &mut Criterion) {
    let inst = instance(500, 1.0, 2);
    let mut g = c.benchmark_group("cycle_statistic_n500");
    g.sample_size(10);
    for (k, l) in [(3, 0), (2, 1), (3, 1), (2, 2), (3, 3)] {
        let index = CycleIndex::new(k, l).unwrap();
        g.bench_function(format!("k{k}_l{l}"), |b| b.iter(|| cycle_statistic(&inst, index, u64::MAX).unwrap()));
    }
    g.finish();
}

fn saw(c: &mut Criterion) {
    let mut g = c.benchmark_group("pair_estimator");
    g.sample_size(10);
    let small = instance(30, 1.0, 3);
    let exact = WalkConfig::new(3, 1, WalkMethod::ExactSAW, u64::MAX).unwrap();
    g.bench_function("exact_n30_k3_l1", |b| b.iter(|| pair_estimator(&small, &exact).unwrap()));
    let large = instance(300, 1.0, 4);
    let walk = WalkConfig::new(6, 3, WalkMethod::WalkMatrix, u64::MAX).unwrap();
    g.bench_function("walk_n300_k6_l3", |b| b.iter(|| pair_estimator(&large, &walk).unwrap()));
    g.finish();
}

fn dykstra(c: &mut Criterion) {
    let inst = instance(150, 1.0, 5);
    let cfg = WalkConfig::new(5, 2, WalkMethod::WalkMatrix, u64::MAX).unwrap();
    let p = pair_estimator(&inst, &cfg).unwrap();
    let mut g = c.benchmark_group("correlation_fit");
    g.sample_size(10);
    g.bench_function("n150", |b| {
        b.iter(|| fit_correlation_matrix(&p, DELTA_PRIME_INIT, DEFAULT_TOL, DEFAULT_MAX_ITERS).unwrap())
    });
    g.finish();
}

fn oracle(c: &mut Criterion) {
    let inst = instance(12, 1.0, 6);
    let mut g = c.benchmark_group("exact_likelihood_ratio");
    g.sample_size(10);
    g.bench_function("n12", |b| b.iter(|| exact_log_likelihood_ratio(&inst, &inst.params).unwrap()));
    g.finish();
}

criterion_group!(benches, sampling, cycles, saw, dykstra, oracle);
criterion_main!(benches);
