//! Sequential vs data-parallel evaluation of the batch workloads.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kprio::exec::Execution;
use kprio::sim::simulate_seeds;
use kprio::sssp::generate_graph;
use kprio::theory::{sample_path_weights, useless_work_bound, BoundInput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn graph_generation(c: &mut Criterion) {
    let mut group = c.benchmark_group("generate_graph n=2000 p=0.2");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| generate_graph(black_box(2000), 0.2, 1, exec).unwrap())
        });
    }
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let mut group = c.benchmark_group("sample_path_weights L=4 1e5");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sample_path_weights(4, black_box(0.5), 100_000, 3, exec))
        });
    }
    group.finish();
}

fn bound(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut d: Vec<f64> = (0..600).map(|_| 0.05 * rng.gen::<f64>()).collect();
    d.sort_by(f64::total_cmp);
    let input = BoundInput { n: 2000, p: 0.5, d, relaxed: (0..600).step_by(6).collect() };
    let mut group = c.benchmark_group("useless_work_bound 600 candidates");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| useless_work_bound(black_box(&input), exec).unwrap())
        });
    }
    group.finish();
}

fn seed_sweep(c: &mut Criterion) {
    let seeds: Vec<u64> = (0..8).collect();
    let mut group = c.benchmark_group("simulate_seeds n=500 P=16 rho=32");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| simulate_seeds(500, 0.2, 16, 32, black_box(&seeds), exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, graph_generation, monte_carlo, bound, seed_sweep);
criterion_main!(benches);
