use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::train::{alternating_descent, random_init, Objective};
use super::{LatentModel, OptimizerConfig};
use crate::data::ResponseMatrix;
use crate::error::{invalid, Error, Result};

/// Point-wise matrix factorization fitted to the responses themselves.
#[derive(Debug, Clone)]
pub struct BaselineModel {
    /// `u_p · v_i` predicts the response of drug `i` in cell line `p`.
    pub model: LatentModel,
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl BaselineModel {
    pub fn predict(&self, p: usize, i: usize) -> f64 {
        self.model.score(p, i)
    }

    /// A model whose scores are negated predictions, so that descending
    /// score order is ascending predicted response.
    pub fn ranking_model(&self) -> LatentModel {
        let mut m = self.model.clone();
        m.u_mut().mapv_inplace(|x| -x);
        m
    }

    /// Root mean squared error over the observed entries of `resp`.
    pub fn rmse(&self, resp: &ResponseMatrix) -> f64 {
        let mut se = 0.0;
        let mut count = 0usize;
        for p in 0..resp.n_cell_lines() {
            for (i, r) in resp.row_observed(p) {
                se += (r - self.predict(p, i)).powi(2);
                count += 1;
            }
        }
        (se / count as f64).sqrt()
    }
}

struct SquaredError<'a> {
    resp: &'a ResponseMatrix,
    reg: f64,
}

impl SquaredError<'_> {
    /// Residual table `r − UᵀV` with zeros where unobserved.
    fn residuals(&self, model: &LatentModel) -> Array2<f64> {
        let pred = model.u().t().dot(model.v());
        let mut res = self.resp.values() - &pred;
        ndarray::Zip::from(&mut res)
            .and(self.resp.observed())
            .for_each(|r, &o| {
                if !o {
                    *r = 0.0
                }
            });
        res
    }
}

impl Objective for SquaredError<'_> {
    fn full_loss(&self, model: &LatentModel) -> Result<f64> {
        let res = self.residuals(model);
        let fit: f64 = res.iter().map(|r| r * r).sum();
        let norm: f64 = model.u().iter().chain(model.v().iter()).map(|x| x * x).sum();
        let l = fit + self.reg * norm;
        if l.is_finite() {
            Ok(l)
        } else {
            Err(Error::NonFiniteLoss { term: "squared error" })
        }
    }

    fn grad_u(&self, model: &LatentModel) -> Result<Array2<f64>> {
        // d/dU = −2 V Rᵀ + 2 reg U
        let res = self.residuals(model);
        let mut g = model.v().dot(&res.t()) * -2.0;
        g.scaled_add(2.0 * self.reg, model.u());
        Ok(g)
    }

    fn grad_v(&self, model: &LatentModel) -> Result<Array2<f64>> {
        let res = self.residuals(model);
        let mut g = model.u().dot(&res) * -2.0;
        g.scaled_add(2.0 * self.reg, model.v());
        Ok(g)
    }
}

/// Minimizes `Σ_observed (r_pi − u_p·v_i)² + reg (|U|² + |V|²)` with the
/// same alternating descent used for the ranking model.
pub fn baseline_pointwise_mf(
    resp_train: &ResponseMatrix,
    latent_dim: usize,
    reg: f64,
    cfg: &OptimizerConfig,
) -> Result<BaselineModel> {
    if latent_dim == 0 {
        return Err(invalid("latent dimension must be at least 1"));
    }
    if !(reg >= 0.0) {
        return Err(invalid("regularization must be non-negative"));
    }
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // Larger start than the ranking model: the squared loss has a saddle at zero.
    let (u, v) = random_init(
        &mut rng,
        latent_dim,
        resp_train.n_cell_lines(),
        resp_train.n_drugs(),
        0.1,
    );
    let mut model = LatentModel::new(
        u,
        v,
        resp_train.cell_line_ids().to_vec(),
        resp_train.drug_ids().to_vec(),
    )?;
    let mut obj = SquaredError { resp: resp_train, reg };
    let out = alternating_descent(
        &mut model,
        &mut obj,
        cfg.learning_rate,
        cfg.max_epochs,
        cfg.convergence_tol,
    )?;
    Ok(BaselineModel {
        model,
        trace: out.trace,
        converged: out.converged,
    })
}
