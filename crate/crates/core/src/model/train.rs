use ndarray::Array2;
use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::{gradients, loss_terms};
use super::{CellLineLabels, LatentModel, LossWeights, OptimizerConfig, TrainingLabels};
use crate::data::ResponseMatrix;
use crate::error::{invalid, Error, Result};
use crate::similarity::SimilarityMatrix;

/// Consecutive non-finite candidate steps tolerated before giving up.
const MAX_NONFINITE_HALVINGS: usize = 10;
/// Training stops once the step size has shrunk by this factor.
const MIN_LR_FACTOR: f64 = 1e-12;
const INIT_RANGE: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: LatentModel,
    /// Full-data loss at initialization and after every epoch.
    pub trace: Vec<f64>,
    pub converged: bool,
    pub final_learning_rate: f64,
}

fn sample_one<R: Rng>(labels: &TrainingLabels, rng: &mut R) -> TrainingLabels {
    let cell_lines = labels
        .cell_lines
        .iter()
        .map(|cl| {
            let take = cl.sensitive.len().min(cl.insensitive.len());
            let mut picked: Vec<usize> = rand::seq::index::sample(rng, cl.insensitive.len(), take)
                .into_iter()
                .map(|k| cl.insensitive[k])
                .collect();
            picked.sort_unstable();
            CellLineLabels {
                sensitive: cl.sensitive.clone(),
                insensitive: picked,
                sensitive_pairs: cl.sensitive_pairs.clone(),
            }
        })
        .collect();
    TrainingLabels { cell_lines }
}

/// Balanced label sets: every sensitive drug is kept and an equal number of
/// insensitive drugs (or all of them, if fewer) is drawn without
/// replacement, independently per cell line and per repeat.
pub fn sample_epoch_labels(labels: &TrainingLabels, seed: u64, repeats: usize) -> Vec<TrainingLabels> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..repeats).map(|_| sample_one(labels, &mut rng)).collect()
}

pub(crate) fn random_init<R: Rng>(rng: &mut R, l: usize, m: usize, n: usize, range: f64) -> (Array2<f64>, Array2<f64>) {
    let dist = Uniform::new(-range, range).expect("valid init range");
    let u = Array2::from_shape_simple_fn((l, m), || dist.sample(rng));
    let v = Array2::from_shape_simple_fn((l, n), || dist.sample(rng));
    (u, v)
}

/// An objective minimized by alternating gradient steps on `U` then `V`.
pub(crate) trait Objective {
    /// Called once before each epoch's pair of steps.
    fn begin_epoch(&mut self) {}
    fn full_loss(&self, model: &LatentModel) -> Result<f64>;
    fn grad_u(&self, model: &LatentModel) -> Result<Array2<f64>>;
    fn grad_v(&self, model: &LatentModel) -> Result<Array2<f64>>;
}

pub(crate) struct DescentOutcome {
    pub trace: Vec<f64>,
    pub converged: bool,
    pub final_learning_rate: f64,
}

/// Alternating descent with step rejection: a step that raises the full
/// loss (or makes it non-finite) is undone and the step size halved.
pub(crate) fn alternating_descent<O: Objective>(
    model: &mut LatentModel,
    objective: &mut O,
    learning_rate: f64,
    max_epochs: usize,
    tol: f64,
) -> Result<DescentOutcome> {
    let mut loss = objective.full_loss(model)?;
    let mut trace = vec![loss];
    let mut lr = learning_rate;
    let mut nonfinite = 0;
    let mut converged = false;

    for _ in 0..max_epochs {
        objective.begin_epoch();
        let candidate = (|| -> Result<(LatentModel, f64)> {
            let mut cand = model.clone();
            let du = objective.grad_u(&cand)?;
            cand.u_mut().scaled_add(-lr, &du);
            let dv = objective.grad_v(&cand)?;
            cand.v_mut().scaled_add(-lr, &dv);
            let l = objective.full_loss(&cand)?;
            Ok((cand, l))
        })();
        match candidate {
            Ok((cand, new_loss)) if new_loss <= loss => {
                let rel = (loss - new_loss) / loss.abs().max(f64::MIN_POSITIVE);
                *model = cand;
                loss = new_loss;
                trace.push(loss);
                nonfinite = 0;
                if rel < tol {
                    converged = true;
                    break;
                }
            }
            Ok(_) => {
                lr *= 0.5;
                nonfinite = 0;
                trace.push(loss);
            }
            Err(Error::NonFiniteLoss { .. }) => {
                lr *= 0.5;
                nonfinite += 1;
                trace.push(loss);
                if nonfinite >= MAX_NONFINITE_HALVINGS {
                    return Err(Error::Diverged {
                        halvings: nonfinite,
                        trace,
                    });
                }
            }
            Err(e) => return Err(e),
        }
        if lr < learning_rate * MIN_LR_FACTOR {
            log::debug!("step size exhausted after {} epochs", trace.len() - 1);
            break;
        }
    }
    Ok(DescentOutcome {
        trace,
        converged,
        final_learning_rate: lr,
    })
}

struct RankingObjective<'a> {
    full: &'a TrainingLabels,
    sim: Option<&'a SimilarityMatrix>,
    weights: LossWeights,
    rng: ChaCha8Rng,
    repeats: usize,
    samples: Vec<TrainingLabels>,
}

impl RankingObjective<'_> {
    fn averaged(&self, model: &LatentModel, want_u: bool) -> Result<Array2<f64>> {
        let mut acc: Option<Array2<f64>> = None;
        for s in &self.samples {
            let (du, dv) = gradients(model, s, self.sim, &self.weights)?;
            let g = if want_u { du } else { dv };
            match acc.as_mut() {
                Some(a) => *a += &g,
                None => acc = Some(g),
            }
        }
        let mut g = acc.expect("at least one sample");
        g /= self.samples.len() as f64;
        Ok(g)
    }
}

impl Objective for RankingObjective<'_> {
    fn begin_epoch(&mut self) {
        self.samples = (0..self.repeats)
            .map(|_| sample_one(self.full, &mut self.rng))
            .collect();
    }

    fn full_loss(&self, model: &LatentModel) -> Result<f64> {
        let t = loss_terms(model, self.full, self.sim)?;
        let total = t.total(&self.weights);
        if total.is_finite() {
            Ok(total)
        } else {
            Err(Error::NonFiniteLoss { term: "total" })
        }
    }

    fn grad_u(&self, model: &LatentModel) -> Result<Array2<f64>> {
        self.averaged(model, true)
    }

    fn grad_v(&self, model: &LatentModel) -> Result<Array2<f64>> {
        self.averaged(model, false)
    }
}

/// Fits cell-line and drug latent vectors to the training labels.
///
/// `U` and `V` start from seeded uniform(−0.01, 0.01) draws. Each epoch
/// draws `sample_repeats` balanced label sets, steps `U` along their mean
/// gradient, then `V` at the updated `U`. The returned trace holds the
/// full-data loss after every epoch and never increases.
pub fn train(
    resp_train: &ResponseMatrix,
    labels: &TrainingLabels,
    sim: Option<&SimilarityMatrix>,
    latent_dim: usize,
    weights: &LossWeights,
    cfg: &OptimizerConfig,
) -> Result<TrainedModel> {
    if latent_dim == 0 {
        return Err(invalid("latent dimension must be at least 1"));
    }
    weights.validate()?;
    cfg.validate()?;
    let (m, n) = (resp_train.n_cell_lines(), resp_train.n_drugs());
    if labels.len() != m {
        return Err(invalid("labels do not match the training cell lines"));
    }
    let sim = match sim {
        Some(s) if weights.gamma != 0.0 => Some(s.restrict(resp_train.cell_line_ids())?),
        _ => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (u, v) = random_init(&mut rng, latent_dim, m, n, INIT_RANGE);
    let mut model = LatentModel::new(
        u,
        v,
        resp_train.cell_line_ids().to_vec(),
        resp_train.drug_ids().to_vec(),
    )?;
    let mut objective = RankingObjective {
        full: labels,
        sim: sim.as_ref(),
        weights: *weights,
        rng,
        repeats: cfg.sample_repeats,
        samples: Vec::new(),
    };
    let out = alternating_descent(
        &mut model,
        &mut objective,
        cfg.learning_rate,
        cfg.max_epochs,
        cfg.convergence_tol,
    )?;
    Ok(TrainedModel {
        model,
        trace: out.trace,
        converged: out.converged,
        final_learning_rate: out.final_learning_rate,
    })
}
