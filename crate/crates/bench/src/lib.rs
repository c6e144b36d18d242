//! Fixtures shared by the benchmarks.

use drugrank::experiment::{generate_synthetic, SyntheticConfig};
use drugrank::similarity::{median_heuristic_gamma, rbf_similarity};
use drugrank::{label_train_test, ResponseMatrix, SimilarityMatrix, TrainingLabels};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Problem {
    pub response: ResponseMatrix,
    pub labels: TrainingLabels,
    pub sim: SimilarityMatrix,
}

/// Synthetic `m × n` training problem labeled at theta 20 with an RBF
/// similarity over its expression.
pub fn problem(m: usize, n: usize, seed: u64) -> Problem {
    let data = generate_synthetic(&SyntheticConfig {
        n_cell_lines: m,
        n_drugs: n,
        seed,
        ..Default::default()
    })
    .expect("valid synthetic config");
    let (labels, _) = label_train_test(&data.response, &data.response, 20.0).expect("labels");
    let labels = TrainingLabels::from_labels(&data.response, &labels).expect("training labels");
    let x = data.expression.values().view();
    let gamma = median_heuristic_gamma(x).expect("bandwidth");
    let sim = rbf_similarity(data.expression.cell_line_ids(), x, gamma).expect("similarity");
    Problem {
        response: data.response,
        labels,
        sim,
    }
}

/// Random scores and responses for one cell line with `n` drugs, about a
/// fifth of them sensitive.
pub fn ranking(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
    let pred: Vec<f64> = truth.iter().map(|t| -t + rng.random_range(-3.0..3.0)).collect();
    let sensitive = truth.iter().map(|&t| t < 2.0).collect();
    (truth, pred, sensitive)
}

/// Standardized design with a sparse linear response.
pub fn regression(rows: usize, cols: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0));
    let y = Array1::from_shape_fn(rows, |r| {
        2.0 * x[[r, 0]] - x[[r, 3]] + 0.1 * rng.random_range(-1.0..1.0)
    });
    (x, y)
}
