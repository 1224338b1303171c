use std::hint::black_box;

use cone_walker::exact::{self, WindowPolicy};
use cone_walker::walk_model::catalog;
use cone_walker::{mc, par, ConeSpec};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn layers(c: &mut Criterion) {
    let model = catalog::lazy();
    let cone = ConeSpec::orthant(2);
    let mut g = c.benchmark_group("exact_layers");
    g.sample_size(10);
    for n in [256u64, 1024] {
        g.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
            b.iter(|| {
                par::sequential(|| {
                    exact::layer_float(&model, &cone, &[1, 1], black_box(n), WindowPolicy::default())
                })
            })
        });
        g.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, &n| {
            b.iter(|| exact::layer_float(&model, &cone, &[1, 1], black_box(n), WindowPolicy::default()))
        });
    }
    g.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let model = catalog::lazy();
    let cone = ConeSpec::orthant(2);
    let mut g = c.benchmark_group("mc_survival");
    g.sample_size(10);
    let samples = 200_000;
    g.bench_function("sequential", |b| {
        b.iter(|| par::sequential(|| mc::mc_survival(&model, &cone, &[1, 1], 200, black_box(samples), 1)))
    });
    g.bench_function("parallel", |b| {
        b.iter(|| mc::mc_survival(&model, &cone, &[1, 1], 200, black_box(samples), 1))
    });
    g.finish();
}

criterion_group!(benches, layers, monte_carlo);
criterion_main!(benches);
