//! Benchmarks the work-queue in parallel and serial modes on two
//! representative workloads: a stability phase sweep (many small eigenvalue
//! problems) and a Monte-Carlo second-moment validation (few large
//! simulation jobs). On multi-core hosts the parallel mode should win
//! roughly linearly; both modes produce identical results.

use criterion::{criterion_group, criterion_main, Criterion};
use masslab::experiments::log_spaced;
use masslab::nesterov::{monte_carlo_second_moment, phase_sweep};
use masslab::par::Jobs;
use std::hint::black_box;

fn bench_phase_sweep(c: &mut Criterion) {
    let etas = log_spaced(1e-3, 0.5, 48);
    let us: Vec<f64> = (1..=48).map(|k| k as f64 / 50.0).collect();
    let mut group = c.benchmark_group("phase_sweep_48x48");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(phase_sweep(1.0, 2.0_f64.powi(-9), &us, &etas, Jobs::Default).unwrap()))
    });
    group.bench_function("serial", |b| {
        b.iter(|| black_box(phase_sweep(1.0, 2.0_f64.powi(-9), &us, &etas, Jobs::Serial).unwrap()))
    });
    group.finish();
}

fn bench_monte_carlo(c: &mut Criterion) {
    let mut group = c.benchmark_group("second_moment_mc_1000x30");
    group.sample_size(10);
    // The Monte-Carlo estimator runs its replicas sequentially inside one
    // job; spread independent parameter points across the queue instead.
    let cells: Vec<(f64, f64)> = vec![
        (0.05, 0.5),
        (0.1, 0.7),
        (0.15, 0.85),
        (0.2, 0.9),
        (0.05, 0.9),
        (0.1, 0.3),
        (0.02, 0.95),
        (0.3, 0.6),
    ];
    for (name, jobs) in [("parallel", Jobs::Default), ("serial", Jobs::Serial)] {
        group.bench_function(name, |b| {
            b.iter(|| {
                let out = masslab::par::run_jobs(cells.clone(), jobs, |i, (eta, gamma)| {
                    monte_carlo_second_moment(1.0, eta, gamma, 1.0, 30, 1000, i as u64).unwrap()
                });
                black_box(out)
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_phase_sweep, bench_monte_carlo);
criterion_main!(benches);
