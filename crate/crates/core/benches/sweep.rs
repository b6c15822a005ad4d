use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pointloc::harness::{run_trial, Family, FamilyParams, Mode};
use pointloc::{par, LearnerConfig, Streams};
use std::hint::black_box;

fn jobs(count: usize) -> Vec<(usize, Streams)> {
    let root = Streams::new(7);
    (0..count).map(|t| (t, root.child(t as u64))).collect()
}

fn trial(cfg: &LearnerConfig, (t, s): (usize, Streams), mode: Mode, d: usize, n: usize) -> u64 {
    run_trial(Family::UniformSphere, d, n, mode, 0.1, cfg, &FamilyParams::default(), s, t).queries
}

fn zero_error_sweep(c: &mut Criterion) {
    let cfg = LearnerConfig::default();
    let mut g = c.benchmark_group("zero_error_sweep");
    g.sample_size(10);
    for d in [4usize, 8] {
        g.bench_with_input(BenchmarkId::new("parallel", d), &d, |b, &d| {
            b.iter(|| black_box(par::map(jobs(16), |j| trial(&cfg, j, Mode::Zero, d, 500))))
        });
        g.bench_with_input(BenchmarkId::new("sequential", d), &d, |b, &d| {
            b.iter(|| black_box(par::map_seq(jobs(16), |j| trial(&cfg, j, Mode::Zero, d, 500))))
        });
    }
    g.finish();
}

fn boost_sweep(c: &mut Criterion) {
    let cfg = LearnerConfig::default();
    let mut g = c.benchmark_group("boost_sweep");
    g.sample_size(10);
    g.bench_function("parallel", |b| {
        b.iter(|| black_box(par::map(jobs(4), |j| trial(&cfg, j, Mode::Bounded, 4, 200))))
    });
    g.bench_function("sequential", |b| {
        b.iter(|| black_box(par::map_seq(jobs(4), |j| trial(&cfg, j, Mode::Bounded, 4, 200))))
    });
    g.finish();
}

criterion_group!(benches, zero_error_sweep, boost_sweep);
criterion_main!(benches);
