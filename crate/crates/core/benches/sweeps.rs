//! Single-thread vs default rayon pool on the three grid-shaped workloads.
//!
//! Build with `--no-default-features` to bench the plain sequential path;
//! with `parallel` on, the "1 thread" group runs the same code inside a
//! one-worker pool.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rayon::ThreadPoolBuilder;
use std::hint::black_box;
use std::time::Duration;
use tmyag_core::fitting::monte_carlo_joint_fits;
use tmyag_core::geometry::SiteIndex;
use tmyag_core::relaxation::dominance_map;
use tmyag_core::zeeman::shift_curve;
use tmyag_core::{MaterialConstants, RelaxParams};

const GAMMA: f64 = 4.0e8;

fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let n = rayon::current_num_threads();
    let mut out = vec![("1 thread".to_string(), ThreadPoolBuilder::new().num_threads(1).build().unwrap())];
    if n > 1 {
        out.push((format!("{n} threads"), ThreadPoolBuilder::new().num_threads(n).build().unwrap()));
    }
    out
}

fn bench_shift_curve(c: &mut Criterion) {
    let consts = MaterialConstants::default_set();
    let sites = SiteIndex::all();
    let thetas: Vec<f64> = grid(-90f64.to_radians(), 90f64.to_radians(), 18_001);
    let mut group = c.benchmark_group("shift_curve");
    for (label, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(&label), |b| {
            b.iter(|| pool.install(|| black_box(shift_curve(&sites, &thetas, 6.0, &consts))))
        });
    }
    group.finish();
}

fn bench_dominance_map(c: &mut Criterion) {
    let p = RelaxParams::reference();
    let bs = grid(0.0, 6.0, 301);
    let ts = grid(1.3, 5.0, 301);
    let mut group = c.benchmark_group("dominance_map");
    for (label, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(&label), |b| {
            b.iter(|| pool.install(|| black_box(dominance_map(&bs, &ts, GAMMA, &p).unwrap())))
        });
    }
    group.finish();
}

fn bench_joint_fits(c: &mut Criterion) {
    let truth = RelaxParams::reference();
    let seeds: Vec<u64> = (0..16).collect();
    let mut group = c.benchmark_group("joint_fit_x16");
    group.sample_size(10);
    for (label, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(&label), |b| {
            b.iter(|| pool.install(|| black_box(monte_carlo_joint_fits(&truth, &truth, GAMMA, 0.1, &seeds))))
        });
    }
    group.finish();
}

fn config() -> Criterion {
    Criterion::default()
        .warm_up_time(Duration::from_secs(1))
        .measurement_time(Duration::from_secs(3))
}

criterion_group!(
    name = benches;
    config = config();
    targets = bench_shift_curve, bench_dominance_map, bench_joint_fits
);
criterion_main!(benches);
