use ndarray::{Array1, Array2, Axis};

use super::{LatentModel, LossWeights, TrainingLabels};
use crate::error::{invalid, Error, Result};
use crate::similarity::SimilarityMatrix;

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Unweighted loss components.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    /// Logistic push loss: sensitive drugs should outscore insensitive ones.
    pub push: f64,
    /// Logistic ordering loss over sensitive-drug pairs.
    pub order: f64,
    /// `|U|²/m + |V|²/n`.
    pub reg_uv: f64,
    /// `(1/m²) Σ_pq w_pq |u_p − u_q|²`.
    pub reg_sim: f64,
}

impl LossTerms {
    pub fn total(&self, w: &LossWeights) -> f64 {
        (1.0 - w.alpha) * self.push + w.alpha * self.order + 0.5 * w.beta * self.reg_uv + 0.5 * w.gamma * self.reg_sim
    }

    fn check(&self) -> Result<()> {
        for (term, v) in [
            ("push", self.push),
            ("order", self.order),
            ("U/V regularizer", self.reg_uv),
            ("similarity regularizer", self.reg_sim),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFiniteLoss { term });
            }
        }
        Ok(())
    }
}

fn check_inputs(model: &LatentModel, labels: &TrainingLabels, sim: Option<&SimilarityMatrix>) -> Result<()> {
    if labels.len() != model.n_cell_lines() {
        return Err(invalid(format!(
            "labels cover {} cell lines, model has {}",
            labels.len(),
            model.n_cell_lines()
        )));
    }
    let n = model.n_drugs();
    for cl in &labels.cell_lines {
        let oob = cl
            .sensitive
            .iter()
            .chain(&cl.insensitive)
            .chain(cl.sensitive_pairs.iter().flat_map(|(a, b)| [a, b]))
            .any(|&i| i >= n);
        if oob {
            return Err(invalid("label drug index out of range"));
        }
    }
    if let Some(s) = sim {
        if s.ids() != model.cell_line_ids() {
            return Err(invalid("similarity matrix is not aligned with the model's cell lines"));
        }
        if s.values().iter().any(|v| !v.is_finite()) {
            return Err(invalid("similarity matrix has undefined entries"));
        }
    }
    Ok(())
}

/// Per-cell-line normalizers for the two ranking terms; zero when the term
/// has nothing to compare.
fn normalizers(cl: &super::CellLineLabels) -> (f64, f64) {
    let pairs = cl.sensitive.len() * cl.insensitive.len();
    let push = if pairs > 0 { 1.0 / pairs as f64 } else { 0.0 };
    let order = if cl.sensitive_pairs.is_empty() {
        0.0
    } else {
        1.0 / cl.sensitive_pairs.len() as f64
    };
    (push, order)
}

fn sim_term(u: &Array2<f64>, sim: Option<&SimilarityMatrix>) -> f64 {
    let Some(s) = sim else { return 0.0 };
    let m = u.ncols();
    let w = s.values();
    let mut total = 0.0;
    for p in 0..m {
        for q in 0..m {
            let wpq = w[[p, q]];
            if wpq != 0.0 && p != q {
                let d = &u.column(p) - &u.column(q);
                total += wpq * d.dot(&d);
            }
        }
    }
    total / (m * m) as f64
}

/// All four loss components at the current model.
pub fn loss_terms(model: &LatentModel, labels: &TrainingLabels, sim: Option<&SimilarityMatrix>) -> Result<LossTerms> {
    check_inputs(model, labels, sim)?;
    let mut terms = LossTerms::default();
    for (p, cl) in labels.cell_lines.iter().enumerate() {
        let (np, no) = normalizers(cl);
        if np == 0.0 && no == 0.0 {
            continue;
        }
        let s = model.scores(p);
        if np > 0.0 {
            let mut acc = 0.0;
            for &j in &cl.sensitive {
                for &i in &cl.insensitive {
                    acc += softplus(-(s[j] - s[i]));
                }
            }
            terms.push += np * acc;
        }
        if no > 0.0 {
            let acc: f64 = cl.sensitive_pairs.iter().map(|&(a, b)| softplus(-(s[a] - s[b]))).sum();
            terms.order += no * acc;
        }
    }
    let (m, n) = (model.n_cell_lines() as f64, model.n_drugs() as f64);
    terms.reg_uv = model.u().iter().map(|x| x * x).sum::<f64>() / m + model.v().iter().map(|x| x * x).sum::<f64>() / n;
    terms.reg_sim = sim_term(model.u(), sim);
    terms.check()?;
    Ok(terms)
}

/// `(1 − α) P + α O + (β/2) R_uv + (γ/2) R_sim` under the logistic surrogate.
pub fn surrogate_loss(
    model: &LatentModel,
    labels: &TrainingLabels,
    sim: Option<&SimilarityMatrix>,
    w: &LossWeights,
) -> Result<f64> {
    let t = loss_terms(model, labels, sim)?;
    let total = t.total(w);
    if !total.is_finite() {
        return Err(Error::NonFiniteLoss { term: "total" });
    }
    Ok(total)
}

/// Exact gradient of [`surrogate_loss`] with respect to `U` and `V`.
pub fn gradients(
    model: &LatentModel,
    labels: &TrainingLabels,
    sim: Option<&SimilarityMatrix>,
    w: &LossWeights,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_inputs(model, labels, sim)?;
    let (u, v) = (model.u(), model.v());
    let (m, n) = (model.n_cell_lines(), model.n_drugs());
    let mut du = Array2::zeros(u.raw_dim());
    let mut dv = Array2::zeros(v.raw_dim());
    let mut coef = Array1::<f64>::zeros(n);

    // d/dx softplus(-x) = -sigmoid(-x); each pair contributes g to the
    // preferred drug's coefficient and -g to the other's.
    for (p, cl) in labels.cell_lines.iter().enumerate() {
        let (np, no) = normalizers(cl);
        let (cp, co) = ((1.0 - w.alpha) * np, w.alpha * no);
        if cp == 0.0 && co == 0.0 {
            continue;
        }
        let s = model.scores(p);
        coef.fill(0.0);
        if cp != 0.0 {
            for &j in &cl.sensitive {
                for &i in &cl.insensitive {
                    let g = -cp * sigmoid(-(s[j] - s[i]));
                    coef[j] += g;
                    coef[i] -= g;
                }
            }
        }
        if co != 0.0 {
            for &(a, b) in &cl.sensitive_pairs {
                let g = -co * sigmoid(-(s[a] - s[b]));
                coef[a] += g;
                coef[b] -= g;
            }
        }
        // dU[:, p] = V coef ; dV[:, i] += coef_i u_p
        du.column_mut(p).assign(&v.dot(&coef));
        let up = u.column(p);
        for i in 0..n {
            if coef[i] != 0.0 {
                dv.column_mut(i).scaled_add(coef[i], &up);
            }
        }
    }

    du.scaled_add(w.beta / m as f64, u);
    dv.scaled_add(w.beta / n as f64, v);

    if let (Some(s), true) = (sim, w.gamma != 0.0) {
        // (γ/m²) Σ_q (w_pq + w_qp)(u_p − u_q)
        let sym = s.values() + &s.values().t();
        let mut sym = sym;
        sym.diag_mut().fill(0.0);
        let degree = sym.sum_axis(Axis(0));
        let scale = w.gamma / (m * m) as f64;
        let mut lap = u * &degree.insert_axis(Axis(0));
        lap -= &u.dot(&sym);
        du.scaled_add(scale, &lap);
    }

    if du.iter().chain(dv.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteLoss { term: "gradient" });
    }
    Ok((du, dv))
}
