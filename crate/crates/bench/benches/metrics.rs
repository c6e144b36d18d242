use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use drugrank::metrics::{ap_at_k, concordance_index, random_ranking_baseline, sensitive_ci};
use drugrank::model::rank_order;
use drugrank_bench::ranking;
use std::hint::black_box;

fn ranking_metrics(c: &mut Criterion) {
    let mut g = c.benchmark_group("metrics");
    for n in [50, 250] {
        let (truth, pred, sens) = ranking(n, 0);
        let ids: Vec<String> = (0..n).map(|i| format!("D{i:03}")).collect();
        let all: Vec<usize> = (0..n).collect();
        g.bench_with_input(BenchmarkId::new("ci", n), &(), |b, _| {
            b.iter(|| concordance_index(black_box(&truth), black_box(&pred)))
        });
        g.bench_with_input(BenchmarkId::new("sci", n), &(), |b, _| {
            b.iter(|| sensitive_ci(black_box(&truth), black_box(&pred), &sens))
        });
        g.bench_with_input(BenchmarkId::new("rank+ap@10", n), &(), |b, _| {
            b.iter(|| {
                let order = rank_order(&ids, black_box(&pred), &all);
                let flags: Vec<bool> = order.iter().map(|&i| sens[i]).collect();
                ap_at_k(&flags, 10)
            })
        });
    }
    g.finish();
}

fn random_baseline(c: &mut Criterion) {
    let folds: Vec<Vec<Vec<bool>>> = (0..5)
        .map(|f| {
            (0..40)
                .map(|p| (0..12).map(|i| (i + p + f) % 5 == 0).collect())
                .collect()
        })
        .collect();
    c.bench_function("random baseline 1000 perms", |b| {
        b.iter(|| random_ranking_baseline(black_box(&folds), 5, 1000, 0))
    });
}

criterion_group!(benches, ranking_metrics, random_baseline);
criterion_main!(benches);
