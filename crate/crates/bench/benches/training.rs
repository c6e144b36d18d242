use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use drugrank::model::{gradients, surrogate_loss};
use drugrank::{train, LatentModel, LossWeights, OptimizerConfig};
use drugrank_bench::problem;
use ndarray::Array2;
use std::hint::black_box;

fn model_for(p: &drugrank_bench::Problem, l: usize) -> LatentModel {
    let (m, n) = (p.response.n_cell_lines(), p.response.n_drugs());
    LatentModel::new(
        Array2::from_shape_fn((l, m), |(k, q)| ((k + 3 * q) % 7) as f64 * 0.01),
        Array2::from_shape_fn((l, n), |(k, i)| ((2 * k + i) % 5) as f64 * 0.01),
        p.response.cell_line_ids().to_vec(),
        p.response.drug_ids().to_vec(),
    )
    .unwrap()
}

fn loss_and_gradients(c: &mut Criterion) {
    let w = LossWeights::new(0.5, 0.1, 100.0).unwrap();
    let mut g = c.benchmark_group("objective");
    for (m, n) in [(20, 40), (40, 120)] {
        let p = problem(m, n, 0);
        let model = model_for(&p, 10);
        g.bench_with_input(BenchmarkId::new("loss", format!("{m}x{n}")), &(), |b, _| {
            b.iter(|| surrogate_loss(black_box(&model), &p.labels, Some(&p.sim), &w).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("gradients", format!("{m}x{n}")), &(), |b, _| {
            b.iter(|| gradients(black_box(&model), &p.labels, Some(&p.sim), &w).unwrap())
        });
    }
    g.finish();
}

fn training(c: &mut Criterion) {
    let p = problem(20, 40, 1);
    let w = LossWeights::new(0.5, 0.1, 1.0).unwrap();
    let cfg = OptimizerConfig {
        max_epochs: 20,
        convergence_tol: 0.0,
        ..Default::default()
    };
    let mut g = c.benchmark_group("train");
    g.sample_size(10);
    g.bench_function("20x40 l=5 20 epochs", |b| {
        b.iter(|| train(&p.response, &p.labels, Some(&p.sim), 5, &w, &cfg).unwrap())
    });
    g.finish();
}

criterion_group!(benches, loss_and_gradients, training);
criterion_main!(benches);
