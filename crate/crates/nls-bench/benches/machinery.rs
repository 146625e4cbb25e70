//! Benchmarks for the hot paths: forest generation, tree-formula coefficient
//! evaluation (exact and f64), the spectral convolution step, and the
//! vanishing sweep at a small box.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use nls_core::coeffs::{h2_scaled_f64, h_coeff_trees, h_trees_scaled_f64};
use nls_core::forest::{generate_forest, generate_forest_with_cap};
use nls_core::lattice::ModeTuple;
use nls_core::sim::{evolve_with, gaussian_profile, SpectralState};
use nls_core::verify_vanishing;

fn bench_forest(c: &mut Criterion) {
    c.bench_function("forest_depth_3", |b| {
        b.iter(|| generate_forest(black_box(3)).unwrap())
    });
    c.bench_function("forest_depth_4_cap", |b| {
        b.iter(|| generate_forest_with_cap(black_box(4), 4).unwrap())
    });
}

fn bench_coeffs(c: &mut Criterion) {
    let t = ModeTuple::from_numerators(&[5, 1, 2, 3, 3, -1, 4], 11);
    c.bench_function("h3_trees_exact", |b| {
        b.iter(|| h_coeff_trees(3, black_box(&t)).unwrap())
    });
    let forest = generate_forest_with_cap(2, 4).unwrap();
    c.bench_function("h3_trees_f64", |b| {
        b.iter(|| h_trees_scaled_f64(&forest, black_box(&[5, 1, 2, 3, 3, -1, 4]), 11))
    });
    c.bench_function("h2_f64", |b| {
        b.iter(|| h2_scaled_f64(black_box(&[4, 1, 0, 2, 1]), 2))
    });
}

fn bench_convolution(c: &mut Criterion) {
    let state = SpectralState::new(gaussian_profile(0.25, 16, 8), 16, 8, 0.285);
    c.bench_function("rk4_40_steps_n16", |b| {
        b.iter(|| evolve_with(black_box(&state), 1.0, 0.025, usize::MAX, |_| {}).unwrap())
    });
}

fn bench_vanishing(c: &mut Criterion) {
    c.bench_function("vanishing_d2_box4", |b| {
        b.iter(|| verify_vanishing(2, black_box(4), 4).unwrap())
    });
}

criterion_group!(
    benches,
    bench_forest,
    bench_coeffs,
    bench_convolution,
    bench_vanishing
);
criterion_main!(benches);
