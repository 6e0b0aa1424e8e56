use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gpo_benches::timing_scene;
use gpo_core::estimation::{pair_homographies, RansacConfig};
use gpo_core::gpo::solve_gpo;
use gpo_core::methods::{run_method, Method, MethodConfig};
use gpo_core::SolverConfig;

fn methods(c: &mut Criterion) {
    let (window, _) = timing_scene(30, 0);
    let config = MethodConfig::default();
    let mut group = c.benchmark_group("initializer_30_frames");
    group.sample_size(20);
    for method in Method::ALL {
        group.bench_function(BenchmarkId::from_parameter(method), |b| {
            b.iter(|| run_method(method, black_box(&window), &config, 0))
        });
    }
    group.finish();
}

fn gpo_by_window(c: &mut Criterion) {
    let mut group = c.benchmark_group("gpo_solve");
    for frames in [5, 10, 20, 30, 60] {
        let (window, _) = timing_scene(frames, 1);
        group.bench_with_input(BenchmarkId::from_parameter(frames), &window, |b, w| {
            b.iter(|| solve_gpo(black_box(w), &SolverConfig::default()))
        });
    }
    group.finish();
}

fn homographies(c: &mut Criterion) {
    let (window, _) = timing_scene(30, 2);
    c.bench_function("pair_homographies_30_frames", |b| {
        b.iter(|| pair_homographies(black_box(&window), &RansacConfig::default(), 0))
    });
}

criterion_group!(benches, methods, gpo_by_window, homographies);
criterion_main!(benches);
