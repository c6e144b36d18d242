mod common;

use common::{ids, max_rel_error, numeric_gradients, random_instance};
use drugrank::experiment::{generate_synthetic, SyntheticConfig};
use drugrank::model::{baseline_pointwise_mf, gradients, loss_terms, sample_epoch_labels, surrogate_loss};
use drugrank::{label_train_test, train, LossWeights, OptimizerConfig, ResponseMatrix, TrainingLabels};
use ndarray::Array2;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gradients_match_finite_differences(
        seed in 0u64..10_000,
        m in 2usize..6,
        n in 5usize..12,
        l in 1usize..4,
        alpha in 0.0f64..1.0,
        beta in 0.0f64..2.0,
        gamma in 0.0f64..50.0,
    ) {
        let inst = random_instance(seed, m, n, l, 40.0);
        let w = LossWeights { alpha, beta, gamma };
        let (du, dv) = gradients(&inst.model, &inst.training, Some(&inst.sim), &w).unwrap();
        let f = |mm: &drugrank::LatentModel| surrogate_loss(mm, &inst.training, Some(&inst.sim), &w).unwrap();
        let (nu, nv) = numeric_gradients(&inst.model, 1e-5, f);
        prop_assert!(max_rel_error(&du, &nu, 1e-6) < 1e-5);
        prop_assert!(max_rel_error(&dv, &nv, 1e-6) < 1e-5);
    }
}

fn planted_training(seed: u64) -> (ResponseMatrix, TrainingLabels) {
    let data = generate_synthetic(&SyntheticConfig {
        n_cell_lines: 6,
        n_drugs: 12,
        latent_dim: 2,
        seed,
        ..Default::default()
    })
    .unwrap();
    let (labels, _) = label_train_test(&data.response, &data.response, 30.0).unwrap();
    let training = TrainingLabels::from_labels(&data.response, &labels).unwrap();
    (data.response, training)
}

#[test]
fn accepted_steps_never_increase_the_loss() {
    for seed in 0..5 {
        let (resp, labels) = planted_training(seed);
        let w = LossWeights::new(0.0, 0.1, 0.0).unwrap();
        let cfg = OptimizerConfig {
            max_epochs: 200,
            seed,
            ..Default::default()
        };
        let fit = train(&resp, &labels, None, 3, &w, &cfg).unwrap();
        assert!(fit.trace.len() > 1);
        assert!(fit.trace.windows(2).all(|p| p[1] <= p[0]), "seed {seed}");
        let end = surrogate_loss(&fit.model, &labels, None, &w).unwrap();
        assert_eq!(end, *fit.trace.last().unwrap());
    }
}

#[test]
fn training_is_deterministic_per_seed() {
    let (resp, labels) = planted_training(1);
    let w = LossWeights::new(0.5, 0.1, 0.0).unwrap();
    let cfg = OptimizerConfig {
        max_epochs: 50,
        seed: 9,
        ..Default::default()
    };
    let a = train(&resp, &labels, None, 2, &w, &cfg).unwrap();
    let b = train(&resp, &labels, None, 2, &w, &cfg).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.trace, b.trace);
    let c = train(&resp, &labels, None, 2, &w, &OptimizerConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.model, c.model);
}

#[test]
fn training_lowers_the_push_loss() {
    let (resp, labels) = planted_training(2);
    let w = LossWeights::new(0.0, 0.1, 0.0).unwrap();
    let fit = train(&resp, &labels, None, 3, &w, &OptimizerConfig::default()).unwrap();
    assert!(fit.trace.last().unwrap() < &(0.5 * fit.trace[0]));
}

#[test]
fn sampled_push_term_is_unbiased_per_pair() {
    let inst = random_instance(3, 1, 12, 2, 40.0);
    let cl = &inst.training.cell_lines[0];
    assert!(cl.sensitive.len() < cl.insensitive.len());
    // α = 0 and no regularizers isolates the push term, normalized per pair.
    let full = loss_terms(&inst.model, &inst.training, None).unwrap().push;
    let draws = 4000;
    let samples: Vec<f64> = sample_epoch_labels(&inst.training, 17, draws)
        .iter()
        .map(|s| loss_terms(&inst.model, s, None).unwrap().push)
        .collect();
    let mean = samples.iter().sum::<f64>() / draws as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
    let se = (var / draws as f64).sqrt();
    assert!(se > 0.0);
    assert!((mean - full).abs() <= 3.0 * se, "mean {mean} full {full} se {se}");
}

#[test]
fn baseline_recovers_noiseless_low_rank_responses() {
    let data = generate_synthetic(&SyntheticConfig {
        n_cell_lines: 15,
        n_drugs: 20,
        latent_dim: 2,
        noise_sigma: 0.0,
        missing_frac: 0.0,
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    let cfg = OptimizerConfig {
        learning_rate: 0.01,
        max_epochs: 20_000,
        convergence_tol: 0.0,
        ..Default::default()
    };
    let fit = baseline_pointwise_mf(&data.response, 2, 0.0, &cfg).unwrap();
    assert!(fit.trace.windows(2).all(|p| p[1] <= p[0]));
    let rmse = fit.rmse(&data.response);
    assert!(rmse <= 1e-3, "rmse {rmse}");
}

#[test]
fn heavy_baseline_regularization_shrinks_to_zero() {
    let resp = ResponseMatrix::dense(
        ids("C", 3),
        ids("D", 4),
        Array2::from_shape_fn((3, 4), |(p, i)| (p + 2 * i) as f64),
    )
    .unwrap();
    let fit = baseline_pointwise_mf(&resp, 2, 1e6, &OptimizerConfig::default()).unwrap();
    for p in 0..3 {
        for i in 0..4 {
            assert!(fit.predict(p, i).abs() < 1e-6);
        }
    }
    let again = baseline_pointwise_mf(&resp, 2, 1e6, &OptimizerConfig::default()).unwrap();
    assert_eq!(fit.model, again.model);
}
