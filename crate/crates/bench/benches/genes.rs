use criterion::{criterion_group, criterion_main, Criterion};
use drugrank::genes::{elastic_net_fit, regularization_path, PathConfig};
use drugrank_bench::regression;
use std::hint::black_box;

fn elastic_net(c: &mut Criterion) {
    let (x, y) = regression(100, 200, 0);
    c.bench_function("elastic net fit 100x200", |b| {
        b.iter(|| elastic_net_fit(black_box(x.view()), y.view(), 0.05, 0.025, 1e-7, 10_000).unwrap())
    });
    let mut g = c.benchmark_group("path");
    g.sample_size(10);
    g.bench_function("cv path 100x200", |b| {
        b.iter(|| regularization_path(black_box(x.view()), y.view(), &PathConfig::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, elastic_net);
criterion_main!(benches);
