#![allow(dead_code)]

use drugrank::labeling::label_train_test;
use drugrank::similarity::rbf_similarity;
use drugrank::{LatentModel, ResponseMatrix, SensitivityLabels, SimilarityMatrix, TrainingLabels};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i:02}")).collect()
}

/// A small random problem with every loss term active.
pub struct Instance {
    pub model: LatentModel,
    pub resp: ResponseMatrix,
    pub labels: SensitivityLabels,
    pub training: TrainingLabels,
    pub sim: SimilarityMatrix,
}

/// Random instance with `m × n` responses (some missing), latent dim `l`
/// and sensitive drugs below the `theta` percentile. Every cell line gets
/// at least two sensitive drugs with distinct responses.
pub fn random_instance(seed: u64, m: usize, n: usize, l: usize, theta: f64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = Array2::from_shape_simple_fn((l, m), || rng.random_range(-1.0..1.0));
    let v = Array2::from_shape_simple_fn((l, n), || rng.random_range(-1.0..1.0));
    let values = Array2::from_shape_simple_fn((m, n), || rng.random_range(0.0..10.0));
    let mut observed = Array2::from_shape_simple_fn((m, n), || rng.random_bool(0.85));
    for i in 0..n {
        observed[[i % m, i]] = true;
    }
    // keep the first four drugs observed so every row has enough sensitive ones
    for p in 0..m {
        for i in 0..4.min(n) {
            observed[[p, i]] = true;
        }
    }
    let resp = ResponseMatrix::new(ids("C", m), ids("D", n), values, observed).unwrap();
    let (labels, _) = label_train_test(&resp, &resp, theta).unwrap();
    let training = TrainingLabels::from_labels(&resp, &labels).unwrap();
    let features = Array2::from_shape_simple_fn((m, 4), || rng.random_range(-1.0..1.0));
    let sim = rbf_similarity(&ids("C", m), features.view(), 0.5).unwrap();
    let model = LatentModel::new(u, v, ids("C", m), ids("D", n)).unwrap();
    Instance {
        model,
        resp,
        labels,
        training,
        sim,
    }
}

/// Central finite-difference gradient of `f` over `U` and `V`.
pub fn numeric_gradients(model: &LatentModel, h: f64, f: impl Fn(&LatentModel) -> f64) -> (Array2<f64>, Array2<f64>) {
    let perturb = |which: usize, r: usize, c: usize, d: f64| {
        let (mut u, mut v) = (model.u().clone(), model.v().clone());
        if which == 0 {
            u[[r, c]] += d;
        } else {
            v[[r, c]] += d;
        }
        LatentModel::new(u, v, model.cell_line_ids().to_vec(), model.drug_ids().to_vec()).unwrap()
    };
    let mut du = Array2::zeros(model.u().raw_dim());
    let mut dv = Array2::zeros(model.v().raw_dim());
    for ((r, c), g) in du.indexed_iter_mut() {
        *g = (f(&perturb(0, r, c, h)) - f(&perturb(0, r, c, -h))) / (2.0 * h);
    }
    for ((r, c), g) in dv.indexed_iter_mut() {
        *g = (f(&perturb(1, r, c, h)) - f(&perturb(1, r, c, -h))) / (2.0 * h);
    }
    (du, dv)
}

/// Largest entrywise `|a − b| / max(|a|, |b|, floor)`.
pub fn max_rel_error(a: &Array2<f64>, b: &Array2<f64>, floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}
