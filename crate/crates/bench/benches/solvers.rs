use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use regime::experiments::{default_univariate_points, univariate_spline_report, GdConfig, LayerScaling};
use regime::flow::{integrate_diagonal_flow, FlowConfig};
use regime::matfac::{completion_phase_cell, CompletionConfig};
use regime::minimizers::{min_l1, min_q_depth2, min_q_depth_d};
use regime::regularizers::{h_d_inverse, q_d};
use regime_bench::sparse_instance;

fn minimizers(c: &mut Criterion) {
    let data = sparse_instance(100, 40);
    let ones = vec![1.0; 100];
    let mut g = c.benchmark_group("minimizers");
    for alpha in [1e-3, 0.1, 10.0] {
        g.bench_with_input(BenchmarkId::new("q2_dual_newton", alpha), &alpha, |b, &a| {
            b.iter(|| min_q_depth2(black_box(&data), a, &ones, 1e-10).unwrap())
        });
    }
    g.bench_function("qD_depth3", |b| b.iter(|| min_q_depth_d(black_box(&data), 0.1, 3, 1e-10).unwrap()));
    g.bench_function("l1_admm", |b| b.iter(|| min_l1(black_box(&data), 1e-9).unwrap()));
    g.finish();
}

fn flows(c: &mut Criterion) {
    let data = sparse_instance(100, 40);
    let cfg = FlowConfig::default();
    let mut g = c.benchmark_group("diagonal_flow");
    g.sample_size(10);
    for alpha in [0.1, 1.0] {
        g.bench_with_input(BenchmarkId::new("depth2", alpha), &alpha, |b, &a| {
            b.iter(|| integrate_diagonal_flow(black_box(&data), 2, a, &[1.0; 100], &cfg).unwrap())
        });
    }
    g.bench_function("depth3", |b| b.iter(|| integrate_diagonal_flow(black_box(&data), 3, 0.5, &[1.0; 100], &cfg).unwrap()));
    g.finish();
}

fn scalar_penalties(c: &mut Criterion) {
    c.bench_function("h_d_inverse_depth4", |b| b.iter(|| h_d_inverse(black_box(3.7), 4, 1e-12).unwrap()));
    c.bench_function("q_d_depth3", |b| b.iter(|| q_d(black_box(2.5), 3, 1e-13).unwrap()));
}

fn experiments(c: &mut Criterion) {
    let mut g = c.benchmark_group("experiments");
    g.sample_size(10);
    g.bench_function("completion_cell_d10_k50", |b| {
        b.iter(|| completion_phase_cell(10, 50, (10.0f64 / 50.0).sqrt(), 60, 0, &CompletionConfig::default()).unwrap())
    });
    let pts = default_univariate_points();
    g.bench_function("spline_width100_alpha1", |b| {
        b.iter(|| univariate_spline_report(&pts, 1.0, 100, LayerScaling::Standard, &GdConfig::default(), 0).unwrap())
    });
    g.finish();
}

criterion_group!(benches, minimizers, flows, scalar_penalties, experiments);
criterion_main!(benches);
