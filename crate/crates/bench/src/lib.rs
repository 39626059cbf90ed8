//! Criterion benchmarks for the estimator, the exact analysis and the
//! optimizer, all on the three-state benchmark.
//!
//! Run with `cargo bench -p gpomdp-bench`.

use std::hint::black_box;

use criterion::{BenchmarkId, Criterion, Throughput};
use gpomdp_core::analysis::{
    Evaluation, ExactOracle, discounted_values, gradient_decomposition_check, induced_chain,
    mixing_time, stationary, stationary_power_iteration,
};
use gpomdp_core::benchmark::{REFERENCE_THETA, three_state_model, three_state_policy};
use gpomdp_core::gpomdp::estimate_from;
use gpomdp_core::optimizer::{ConjSettings, conjpomdp};
use gpomdp_core::rng;

/// Simulation steps per second of the streaming estimator.
pub fn estimator(c: &mut Criterion) {
    let model = three_state_model();
    let policy = three_state_policy();
    let mut group = c.benchmark_group("gpomdp");
    for horizon in [10_000u64, 100_000] {
        group.throughput(Throughput::Elements(horizon));
        group.bench_with_input(BenchmarkId::new("estimate", horizon), &horizon, |b, &t| {
            let mut r = rng::from_seed(1);
            b.iter(|| estimate_from(&model, &policy, &REFERENCE_THETA, 0.9, t, 0, &mut r).unwrap())
        });
    }
    group.finish();
}

pub fn exact_analysis(c: &mut Criterion) {
    let model = three_state_model();
    let policy = three_state_policy();
    let chain = induced_chain(&model, &policy, &REFERENCE_THETA).unwrap();
    let pi = stationary(&chain.transition).unwrap();
    let values = discounted_values(&chain.transition, model.rewards(), 0.9).unwrap();

    let mut group = c.benchmark_group("exact");
    group.bench_function("evaluation", |b| {
        b.iter(|| Evaluation::at(&model, &policy, black_box(&REFERENCE_THETA)).unwrap())
    });
    group.bench_function("stationary_direct", |b| {
        b.iter(|| stationary(black_box(&chain.transition)).unwrap())
    });
    group.bench_function("stationary_power_iteration", |b| {
        b.iter(|| stationary_power_iteration(black_box(&chain.transition), 1e-12, 100_000).unwrap())
    });
    group.bench_function("decomposition_check", |b| {
        b.iter(|| gradient_decomposition_check(&chain, &pi, model.rewards(), &values).unwrap())
    });
    group.bench_function("mixing_time_100", |b| {
        b.iter(|| mixing_time(black_box(&chain.transition), 100).unwrap())
    });
    group.finish();
}

/// A full training run with the exact oracle, from a fixed start.
pub fn optimizer(c: &mut Criterion) {
    let model = three_state_model();
    let policy = three_state_policy();
    c.bench_function("conjpomdp_exact_oracle", |b| {
        b.iter(|| {
            let mut oracle = ExactOracle {
                model: &model,
                policy: &policy,
            };
            conjpomdp(
                &mut oracle,
                black_box(&[0.05, -0.03, 0.02, 0.01]),
                ConjSettings::default(),
            )
            .unwrap()
        })
    });
}
