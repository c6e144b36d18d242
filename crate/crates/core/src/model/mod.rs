//! Latent-factor drug ranking: each cell line `p` and drug `i` get
//! `l`-dimensional latent vectors and the drug's score in the cell line is
//! their dot product. Higher scores rank higher.

mod baseline;
mod loss;
mod persist;
mod train;

use std::cmp::Ordering;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::data::ResponseMatrix;
use crate::error::{invalid, Error, Result};
use crate::labeling::{Label, SensitivityLabels};

pub use baseline::{baseline_pointwise_mf, BaselineModel};
pub use loss::{gradients, loss_terms, surrogate_loss, LossTerms};
pub use persist::ModelMetadata;
pub use train::{sample_epoch_labels, train, TrainedModel};

#[derive(Debug, Clone, PartialEq)]
pub struct LatentModel {
    u: Array2<f64>,
    v: Array2<f64>,
    cell_line_ids: Vec<String>,
    drug_ids: Vec<String>,
}

impl LatentModel {
    /// `u` is `l × m` (one column per cell line), `v` is `l × n`.
    pub fn new(u: Array2<f64>, v: Array2<f64>, cell_line_ids: Vec<String>, drug_ids: Vec<String>) -> Result<Self> {
        if u.nrows() != v.nrows() {
            return Err(Error::Shape(format!(
                "latent dimensions differ: U has {}, V has {}",
                u.nrows(),
                v.nrows()
            )));
        }
        if u.ncols() != cell_line_ids.len() || v.ncols() != drug_ids.len() {
            return Err(Error::Shape("latent matrix columns do not match id lists".into()));
        }
        if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(invalid("latent matrices contain non-finite entries"));
        }
        Ok(Self {
            u,
            v,
            cell_line_ids,
            drug_ids,
        })
    }

    pub fn u(&self) -> &Array2<f64> {
        &self.u
    }

    pub fn v(&self) -> &Array2<f64> {
        &self.v
    }

    pub(crate) fn u_mut(&mut self) -> &mut Array2<f64> {
        &mut self.u
    }

    pub(crate) fn v_mut(&mut self) -> &mut Array2<f64> {
        &mut self.v
    }

    pub fn latent_dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn n_cell_lines(&self) -> usize {
        self.u.ncols()
    }

    pub fn n_drugs(&self) -> usize {
        self.v.ncols()
    }

    pub fn cell_line_ids(&self) -> &[String] {
        &self.cell_line_ids
    }

    pub fn drug_ids(&self) -> &[String] {
        &self.drug_ids
    }

    pub fn cell_line_vector(&self, p: usize) -> ArrayView1<'_, f64> {
        self.u.column(p)
    }

    /// `f_p(d_i) = u_p · v_i`.
    pub fn score(&self, p: usize, i: usize) -> f64 {
        self.u.column(p).dot(&self.v.column(i))
    }

    /// Scores of every drug for an arbitrary cell-line vector.
    pub fn scores_for(&self, u: ArrayView1<'_, f64>) -> Array1<f64> {
        self.v.t().dot(&u)
    }

    pub fn scores(&self, p: usize) -> Array1<f64> {
        self.scores_for(self.u.column(p))
    }

    /// Ranking of `subset` (drug indices) for cell line `p`.
    pub fn rank_for_cell_line(&self, p: usize, subset: &[usize]) -> Vec<RankedDrug> {
        rank_drugs(&self.drug_ids, self.scores(p).as_slice().unwrap(), subset)
    }

    pub fn rank_for_vector(&self, u: ArrayView1<'_, f64>, subset: &[usize]) -> Vec<RankedDrug> {
        rank_drugs(&self.drug_ids, self.scores_for(u).as_slice().unwrap(), subset)
    }

    /// The same drug vectors with new cell-line vectors.
    pub fn with_cell_lines(&self, u: Array2<f64>, cell_line_ids: Vec<String>) -> Result<Self> {
        Self::new(u, self.v.clone(), cell_line_ids, self.drug_ids.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedDrug {
    pub index: usize,
    pub id: String,
    pub score: f64,
}

/// Orders `subset` by descending score, breaking ties by ascending id.
pub fn rank_order(ids: &[String], scores: &[f64], subset: &[usize]) -> Vec<usize> {
    let mut order = subset.to_vec();
    order.sort_by(|&a, &b| match scores[b].partial_cmp(&scores[a]) {
        Some(Ordering::Equal) | None => ids[a].cmp(&ids[b]),
        Some(o) => o,
    });
    order
}

pub fn rank_drugs(ids: &[String], scores: &[f64], subset: &[usize]) -> Vec<RankedDrug> {
    rank_order(ids, scores, subset)
        .into_iter()
        .map(|i| RankedDrug {
            index: i,
            id: ids[i].clone(),
            score: scores[i],
        })
        .collect()
}

/// Latent vector for an unseen cell line: the similarity-weighted mean of
/// the `top_k` most similar training cell-line vectors. `sim_to_train` is
/// aligned with the model's cell lines. Ties in similarity are broken by
/// lower training index.
pub fn extrapolate_cell_line(model: &LatentModel, sim_to_train: &[f64], top_k: usize) -> Result<Array1<f64>> {
    if top_k == 0 {
        return Err(invalid("top_k must be at least 1"));
    }
    if sim_to_train.len() != model.n_cell_lines() {
        return Err(Error::Shape(format!(
            "{} similarities for {} training cell lines",
            sim_to_train.len(),
            model.n_cell_lines()
        )));
    }
    if sim_to_train.iter().any(|s| !s.is_finite()) {
        return Err(invalid("similarities must be finite"));
    }
    let mut order: Vec<usize> = (0..sim_to_train.len()).collect();
    order.sort_by(|&a, &b| sim_to_train[b].total_cmp(&sim_to_train[a]).then(a.cmp(&b)));
    order.truncate(top_k);
    let total: f64 = order.iter().map(|&q| sim_to_train[q]).sum();
    if order.iter().all(|&q| sim_to_train[q] <= 0.0) || total <= 0.0 {
        return Err(invalid("top-k similarities are not positive"));
    }
    let mut u = Array1::zeros(model.latent_dim());
    for &q in &order {
        u.scaled_add(sim_to_train[q] / total, &model.u.column(q));
    }
    Ok(u)
}

/// Relative weights of the loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Trade-off between push (`alpha = 0`) and sensitive-drug ordering (`alpha = 1`).
    pub alpha: f64,
    /// Frobenius regularization of `U` and `V`.
    pub beta: f64,
    /// Similarity regularization of cell-line vectors.
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            beta: 0.1,
            gamma: 100.0,
        }
    }
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let w = Self { alpha, beta, gamma };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(invalid(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.beta >= 0.0) || !(self.gamma >= 0.0) {
            return Err(invalid("beta and gamma must be non-negative"));
        }
        Ok(())
    }
}

pub const DEFAULT_LATENT_DIM: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop once an accepted step changes the loss by less than this fraction.
    pub convergence_tol: f64,
    /// Sampled label sets whose gradients are averaged per epoch.
    pub sample_repeats: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2.0,
            max_epochs: 300,
            convergence_tol: 1e-6,
            sample_repeats: 3,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning rate must be positive"));
        }
        if self.sample_repeats == 0 {
            return Err(invalid("sample_repeats must be at least 1"));
        }
        if !(self.convergence_tol >= 0.0) {
            return Err(invalid("convergence tolerance must be non-negative"));
        }
        Ok(())
    }
}

/// Label structure of one cell line used by the training losses.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CellLineLabels {
    pub sensitive: Vec<usize>,
    pub insensitive: Vec<usize>,
    /// `(a, b)` with `a` strictly more sensitive than `b`, both sensitive.
    pub sensitive_pairs: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLabels {
    pub cell_lines: Vec<CellLineLabels>,
}

impl TrainingLabels {
    /// Collects sensitive and insensitive sets and sensitive-pair orders
    /// from training labels and the responses they were derived from.
    pub fn from_labels(resp: &ResponseMatrix, labels: &SensitivityLabels) -> Result<Self> {
        if resp.cell_line_ids() != labels.cell_line_ids() || resp.drug_ids() != labels.drug_ids() {
            return Err(invalid("labels and responses are not aligned"));
        }
        let cell_lines = (0..resp.n_cell_lines())
            .map(|p| {
                let mut cl = CellLineLabels::default();
                for i in 0..resp.n_drugs() {
                    if !resp.is_observed(p, i) {
                        continue;
                    }
                    match labels.get(p, i) {
                        Label::Sensitive => cl.sensitive.push(i),
                        Label::Insensitive => cl.insensitive.push(i),
                        Label::Unknown => {}
                    }
                }
                for &a in &cl.sensitive {
                    for &b in &cl.sensitive {
                        let (ra, rb) = (resp.get(p, a).unwrap(), resp.get(p, b).unwrap());
                        if ra < rb {
                            cl.sensitive_pairs.push((a, b));
                        }
                    }
                }
                cl
            })
            .collect();
        Ok(Self { cell_lines })
    }

    pub fn len(&self) -> usize {
        self.cell_lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cell_lines.is_empty()
    }
}
