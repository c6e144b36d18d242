//! Elastic-net gene selection.
//!
//! Each drug's observed responses are regressed on expression with an
//! ℓ1+ℓ2 penalty; the genes with non-zero weight at the cross-validated
//! penalty are kept, and the union over drugs is the selected feature set.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ExpressionMatrix, ResponseMatrix};
use crate::error::{invalid, Error, Result};

/// Ratio of the smallest to the largest penalty on a path.
const PATH_SPAN: f64 = 1e-3;
const CV_FOLDS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ElasticNetFit {
    /// Weights on the original (unstandardized) columns.
    pub weights: Array1<f64>,
    pub intercept: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Coordinate-descent sweeps performed.
    pub iterations: usize,
    pub converged: bool,
}

impl ElasticNetFit {
    pub fn support(&self) -> Vec<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        x.dot(&self.weights) + self.intercept
    }
}

/// Centered, scaled copy of the design with the statistics needed to map
/// weights back. Constant columns are left as zeros and flagged.
struct Standardized {
    z: Array2<f64>,
    mean: Array1<f64>,
    scale: Array1<f64>,
    active: Vec<bool>,
    y_mean: f64,
    yc: Array1<f64>,
}

fn check_inputs(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!(
            "{} rows of X but {} responses",
            x.nrows(),
            y.len()
        )));
    }
    if x.nrows() < 2 {
        return Err(invalid("elastic net needs at least 2 observations"));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(invalid("elastic net input contains non-finite values"));
    }
    Ok(())
}

fn standardize(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Standardized {
    let m = x.nrows() as f64;
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let mut z = &x - &mean;
    let mut scale = Array1::zeros(x.ncols());
    let mut active = vec![false; x.ncols()];
    for (j, mut col) in z.axis_iter_mut(Axis(1)).enumerate() {
        let sd = (col.iter().map(|v| v * v).sum::<f64>() / m).sqrt();
        // Relative cutoff so that columns constant up to rounding stay out.
        if sd > 1e-12 * (1.0 + mean[j].abs()) {
            col /= sd;
            scale[j] = sd;
            active[j] = true;
        } else {
            col.fill(0.0);
        }
    }
    let y_mean = y.mean().expect("non-empty");
    let yc = &y - y_mean;
    Standardized {
        z,
        mean,
        scale,
        active,
        y_mean,
        yc,
    }
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Largest absolute subgradient violation of the standardized problem.
fn kkt_residual_std(q: &Array1<f64>, w: &Array1<f64>, active: &[bool], l1: f64, l2: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..w.len() {
        if !active[j] {
            continue;
        }
        let r = if w[j] != 0.0 {
            (-q[j] + l2 * w[j] + l1 * w[j].signum()).abs()
        } else {
            (q[j].abs() - l1).max(0.0)
        };
        worst = worst.max(r);
    }
    worst
}

/// Coordinate descent on the standardized problem, starting from `w`.
/// `q` tracks `zᵀ(yc − z w)/m`; Gram columns are computed the first time a
/// coordinate becomes non-zero.
fn descend(s: &Standardized, w: &mut Array1<f64>, l1: f64, l2: f64, tol: f64, max_iter: usize) -> (usize, bool) {
    let m = s.z.nrows() as f64;
    let g = s.z.ncols();
    let mut gram: Vec<Option<Array1<f64>>> = vec![None; g];
    let gram_col = |j: usize| s.z.t().dot(&s.z.column(j)) / m;
    let exact_q = |w: &Array1<f64>| s.z.t().dot(&(&s.yc - &s.z.dot(w))) / m;
    let mut q = exact_q(w);

    for sweep in 1..=max_iter {
        for j in 0..g {
            if !s.active[j] {
                continue;
            }
            let old = w[j];
            // Columns have unit mean square, so the coordinate curvature is 1 + l2.
            let new = soft_threshold(q[j] + old, l1) / (1.0 + l2);
            let delta = new - old;
            if delta != 0.0 {
                let col = gram[j].get_or_insert_with(|| gram_col(j));
                q.scaled_add(-delta, col);
                w[j] = new;
            }
        }
        if kkt_residual_std(&q, w, &s.active, l1, l2) <= tol {
            // Guard against drift in the incremental updates.
            q = exact_q(w);
            if kkt_residual_std(&q, w, &s.active, l1, l2) <= tol {
                return (sweep, true);
            }
        }
    }
    (max_iter, false)
}

fn to_original(
    s: &Standardized,
    w_std: &Array1<f64>,
    l1: f64,
    l2: f64,
    iterations: usize,
    converged: bool,
) -> ElasticNetFit {
    let weights = Array1::from_shape_fn(w_std.len(), |j| if s.active[j] { w_std[j] / s.scale[j] } else { 0.0 });
    let intercept = s.y_mean - weights.dot(&s.mean);
    ElasticNetFit {
        weights,
        intercept,
        lambda1: l1,
        lambda2: l2,
        iterations,
        converged,
    }
}

fn check_penalties(l1: f64, l2: f64, tol: f64) -> Result<()> {
    if !(l1 >= 0.0 && l1.is_finite() && l2 >= 0.0 && l2.is_finite()) {
        return Err(invalid(format!(
            "penalties must be finite and non-negative, got {l1}, {l2}"
        )));
    }
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    Ok(())
}

/// Minimizes `(1/2m)|y − Xw − b|² + l1 |w|₁ + (l2/2)|w|²` over the
/// internally standardized columns of `x`. When `max_iter` runs out the
/// partial fit is returned with `converged = false`.
pub fn elastic_net_fit(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    lambda1: f64,
    lambda2: f64,
    tol: f64,
    max_iter: usize,
) -> Result<ElasticNetFit> {
    check_inputs(x, y)?;
    check_penalties(lambda1, lambda2, tol)?;
    let s = standardize(x, y);
    let mut w = Array1::zeros(x.ncols());
    let (it, conv) = descend(&s, &mut w, lambda1, lambda2, tol, max_iter);
    Ok(to_original(&s, &w, lambda1, lambda2, it, conv))
}

/// Smallest `lambda1` at which every weight is zero.
pub fn lambda_max(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Result<f64> {
    check_inputs(x, y)?;
    let s = standardize(x, y);
    let m = x.nrows() as f64;
    Ok(s.z.t().dot(&s.yc).iter().fold(0.0, |a: f64, v| a.max(v.abs() / m)))
}

/// Objective value of `fit` on the standardized scale, the scale on which
/// the penalties act.
pub fn objective(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, fit: &ElasticNetFit) -> Result<f64> {
    check_inputs(x, y)?;
    let s = standardize(x, y);
    let w_std = &fit.weights * &s.scale;
    Ok(std_objective(&s, &w_std, fit.lambda1, fit.lambda2))
}

fn std_objective(s: &Standardized, w: &Array1<f64>, l1: f64, l2: f64) -> f64 {
    let m = s.z.nrows() as f64;
    let r = &s.yc - &s.z.dot(w);
    r.dot(&r) / (2.0 * m) + l1 * w.iter().map(|v| v.abs()).sum::<f64>() + 0.5 * l2 * w.dot(w)
}

/// Largest subgradient violation of `fit` on the standardized scale.
pub fn kkt_residual(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, fit: &ElasticNetFit) -> Result<f64> {
    check_inputs(x, y)?;
    let s = standardize(x, y);
    let m = x.nrows() as f64;
    let w_std = &fit.weights * &s.scale;
    let q = s.z.t().dot(&(&s.yc - &s.z.dot(&w_std))) / m;
    Ok(kkt_residual_std(&q, &w_std, &s.active, fit.lambda1, fit.lambda2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathConfig {
    pub n_lambdas: usize,
    /// `lambda2 = l2_ratio · lambda1` along the path.
    pub l2_ratio: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Seed for the internal cross-validation split.
    pub seed: u64,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            n_lambdas: 20,
            l2_ratio: 0.5,
            tol: 1e-7,
            max_iter: 10_000,
            seed: 0,
        }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_lambdas < 2 {
            return Err(invalid("a regularization path needs at least 2 penalties"));
        }
        if !(self.l2_ratio >= 0.0 && self.l2_ratio.is_finite()) {
            return Err(invalid("l2 ratio must be finite and non-negative"));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(invalid("tolerance must be positive and max_iter at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RegularizationPath {
    /// Fits on all rows, from the largest penalty down.
    pub fits: Vec<ElasticNetFit>,
    /// Mean held-out squared error per penalty.
    pub cv_mse: Vec<f64>,
    pub best: usize,
}

impl RegularizationPath {
    pub fn best_fit(&self) -> &ElasticNetFit {
        &self.fits[self.best]
    }
}

fn lambda_grid(lmax: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| lmax * PATH_SPAN.powf(k as f64 / (n - 1) as f64))
        .collect()
}

/// Warm-started fits over a fixed penalty grid.
fn fit_path(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    lambdas: &[f64],
    cfg: &PathConfig,
) -> Result<Vec<ElasticNetFit>> {
    let s = standardize(x, y);
    let mut w = Array1::zeros(x.ncols());
    let mut fits = Vec::with_capacity(lambdas.len());
    for &l1 in lambdas {
        let l2 = cfg.l2_ratio * l1;
        let (it, conv) = descend(&s, &mut w, l1, l2, cfg.tol, cfg.max_iter);
        if !conv {
            log::debug!("elastic net at lambda1={l1:e} stopped after {it} sweeps");
        }
        fits.push(to_original(&s, &w, l1, l2, it, conv));
    }
    Ok(fits)
}

/// Fits a geometric penalty path from the saturation value down to
/// `1e-3` of it and picks the penalty with the lowest 3-fold
/// cross-validated error (the larger penalty on ties).
pub fn regularization_path(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    cfg: &PathConfig,
) -> Result<RegularizationPath> {
    cfg.validate()?;
    check_inputs(x, y)?;
    let m = x.nrows();
    let lmax = lambda_max(x, y)?;
    if lmax == 0.0 {
        // Nothing to explain: every penalty gives the intercept-only fit.
        let fit = elastic_net_fit(x, y, 0.0, 0.0, cfg.tol, 1)?;
        let fits = lambda_grid(1.0, cfg.n_lambdas)
            .into_iter()
            .map(|_| ElasticNetFit {
                lambda1: 0.0,
                ..fit.clone()
            })
            .collect();
        return Ok(RegularizationPath {
            fits,
            cv_mse: vec![0.0; cfg.n_lambdas],
            best: 0,
        });
    }
    let lambdas = lambda_grid(lmax, cfg.n_lambdas);

    let mut cv_mse = vec![0.0; lambdas.len()];
    let mut used_folds = 0usize;
    if m >= 2 * CV_FOLDS {
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
        for f in 0..CV_FOLDS {
            let test: Vec<usize> = order.iter().copied().skip(f).step_by(CV_FOLDS).collect();
            let train: Vec<usize> = (0..m).filter(|i| !test.contains(i)).collect();
            let xt = x.select(Axis(0), &train);
            let yt = y.select(Axis(0), &train);
            let xv = x.select(Axis(0), &test);
            let yv = y.select(Axis(0), &test);
            for (k, fit) in fit_path(xt.view(), yt.view(), &lambdas, cfg)?.iter().enumerate() {
                let err = &fit.predict(xv.view()) - &yv;
                cv_mse[k] += err.dot(&err) / test.len() as f64;
            }
            used_folds += 1;
        }
        for v in &mut cv_mse {
            *v /= used_folds as f64;
        }
    } else {
        log::warn!("only {m} observations; skipping cross-validation and using the smallest penalty");
    }
    let best = if used_folds == 0 {
        lambdas.len() - 1
    } else {
        (0..lambdas.len()).fold(0, |b, k| if cv_mse[k] < cv_mse[b] { k } else { b })
    };
    Ok(RegularizationPath {
        fits: fit_path(x, y, &lambdas, cfg)?,
        cv_mse,
        best,
    })
}

/// Genes selected by the best-penalty fit of each drug.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneSelection {
    /// Union over drugs, in expression-column order.
    pub gene_ids: Vec<String>,
    /// Per drug, in response-column order.
    pub per_drug: Vec<Vec<String>>,
}

/// Runs one regularization path per drug over the cell lines with an
/// observed response and unions the supports. Drugs are processed in
/// parallel; the result does not depend on scheduling.
pub fn select_genes(resp: &ResponseMatrix, expr: &ExpressionMatrix, cfg: &PathConfig) -> Result<GeneSelection> {
    cfg.validate()?;
    let expr = expr.align_to(resp)?;
    let x = expr.values();
    let supports: Vec<Vec<usize>> = (0..resp.n_drugs())
        .into_par_iter()
        .map(|i| -> Result<Vec<usize>> {
            let rows: Vec<usize> = (0..resp.n_cell_lines()).filter(|&p| resp.is_observed(p, i)).collect();
            if rows.len() < 2 {
                log::warn!(
                    "drug {} has {} observations; no genes selected for it",
                    resp.drug_ids()[i],
                    rows.len()
                );
                return Ok(Vec::new());
            }
            let xs = x.select(Axis(0), &rows);
            let ys = Array1::from_iter(rows.iter().map(|&p| resp.get(p, i).expect("observed")));
            Ok(regularization_path(xs.view(), ys.view(), cfg)?.best_fit().support())
        })
        .collect::<Result<_>>()?;

    let union: BTreeSet<usize> = supports.iter().flatten().copied().collect();
    if union.is_empty() {
        return Err(Error::NoGenesSelected);
    }
    let genes = expr.gene_ids();
    log::info!("selected {} of {} genes", union.len(), genes.len());
    Ok(GeneSelection {
        gene_ids: union.iter().map(|&j| genes[j].clone()).collect(),
        per_drug: supports
            .iter()
            .map(|s| s.iter().map(|&j| genes[j].clone()).collect())
            .collect(),
    })
}

/// One gene id per line.
pub fn write_gene_list<W: std::io::Write>(mut writer: W, genes: &[String]) -> Result<()> {
    for g in genes {
        writeln!(writer, "{g}").map_err(|e| Error::io("<gene list>", e))?;
    }
    Ok(())
}

pub fn read_gene_list<R: std::io::Read>(mut reader: R) -> Result<Vec<String>> {
    let mut text = String::new();
    reader
        .read_to_string(&mut text)
        .map_err(|e| Error::io("<gene list>", e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};
    use rand_distr::{Distribution, StandardNormal};

    fn planted(seed: u64, m: usize, g: usize, sigma: f64) -> (Array2<f64>, Array1<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_simple_fn((m, g), || StandardNormal.sample(&mut rng));
        let y = Array1::from_shape_fn(m, |r| {
            3.0 * x[[r, 2]] - 2.0 * x[[r, 7]] + sigma * Distribution::<f64>::sample(&StandardNormal, &mut rng)
        });
        (x, y)
    }

    /// Solves the square system `a z = b` by Gaussian elimination with
    /// partial pivoting.
    fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, piv);
            b.swap(c, piv);
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
        let mut z = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|k| a[r][k] * z[k]).sum();
            z[r] = (b[r] - s) / a[r][r];
        }
        z
    }

    #[test]
    fn saturation_zeroes_weights() {
        let (x, y) = planted(1, 30, 10, 0.1);
        let lmax = lambda_max(x.view(), y.view()).unwrap();
        let fit = elastic_net_fit(x.view(), y.view(), lmax * 1.0001, 0.3, 1e-10, 1000).unwrap();
        assert!(fit.weights.iter().all(|&w| w == 0.0));
        assert!((fit.intercept - y.mean().unwrap()).abs() < 1e-12);
        let fit = elastic_net_fit(x.view(), y.view(), lmax * 0.9, 0.0, 1e-10, 1000).unwrap();
        assert!(!fit.support().is_empty());
    }

    #[test]
    fn unpenalized_matches_least_squares() {
        let x = arr2(&[
            [1.0, 2.0, 0.5],
            [0.0, -1.0, 3.0],
            [2.0, 0.0, 1.0],
            [-1.0, 1.5, 0.0],
            [0.5, 0.5, -2.0],
        ]);
        let y = arr1(&[1.0, -2.0, 0.5, 3.0, 0.25]);
        // Normal equations over [1, x].
        let rows: Vec<Vec<f64>> = (0..5).map(|r| vec![1.0, x[[r, 0]], x[[r, 1]], x[[r, 2]]]).collect();
        let a: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| rows.iter().map(|r| r[i] * r[j]).sum()).collect())
            .collect();
        let b: Vec<f64> = (0..4)
            .map(|i| rows.iter().zip(&y).map(|(r, yv)| r[i] * yv).sum())
            .collect();
        let beta = solve(a, b);

        let fit = elastic_net_fit(x.view(), y.view(), 0.0, 0.0, 1e-13, 1_000_000).unwrap();
        assert!(fit.converged);
        assert!((fit.intercept - beta[0]).abs() < 1e-8);
        for j in 0..3 {
            assert!(
                (fit.weights[j] - beta[j + 1]).abs() < 1e-8,
                "{j}: {} vs {}",
                fit.weights[j],
                beta[j + 1]
            );
        }
    }

    #[test]
    fn constant_column_gets_zero_weight() {
        let (mut x, y) = planted(2, 20, 8, 0.1);
        x.column_mut(3).fill(4.5);
        let fit = elastic_net_fit(x.view(), y.view(), 0.0, 0.01, 1e-10, 10_000).unwrap();
        assert_eq!(fit.weights[3], 0.0);
        assert!(fit.converged);
    }

    #[test]
    fn rejects_non_finite_and_tiny_inputs() {
        let (mut x, y) = planted(3, 10, 8, 0.1);
        assert!(elastic_net_fit(x.view(), y.slice(ndarray::s![..1]), 0.1, 0.0, 1e-8, 10).is_err());
        x[[0, 0]] = f64::NAN;
        assert!(elastic_net_fit(x.view(), y.view(), 0.1, 0.0, 1e-8, 10).is_err());
    }

    #[test]
    fn objective_never_increases_across_sweeps() {
        let (x, y) = planted(4, 40, 15, 0.5);
        let mut prev = f64::INFINITY;
        for it in 1..30 {
            let fit = elastic_net_fit(x.view(), y.view(), 0.05, 0.02, 1e-14, it).unwrap();
            let obj = objective(x.view(), y.view(), &fit).unwrap();
            assert!(obj <= prev + 1e-15, "sweep {it}: {obj} > {prev}");
            prev = obj;
        }
    }

    #[test]
    fn converged_fit_satisfies_kkt() {
        let (x, y) = planted(5, 50, 12, 0.3);
        let fit = elastic_net_fit(x.view(), y.view(), 0.1, 0.05, 1e-9, 10_000).unwrap();
        assert!(fit.converged);
        assert!(kkt_residual(x.view(), y.view(), &fit).unwrap() <= 1e-9);
    }

    #[test]
    fn warm_path_matches_cold_fits() {
        let (x, y) = planted(6, 60, 20, 0.01);
        let cfg = PathConfig {
            n_lambdas: 10,
            tol: 1e-10,
            ..Default::default()
        };
        let path = regularization_path(x.view(), y.view(), &cfg).unwrap();
        assert_eq!(path.fits.len(), 10);
        for fit in &path.fits {
            let cold = elastic_net_fit(x.view(), y.view(), fit.lambda1, fit.lambda2, 1e-10, cfg.max_iter).unwrap();
            let a = objective(x.view(), y.view(), fit).unwrap();
            let b = objective(x.view(), y.view(), &cold).unwrap();
            assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
        let lmax = lambda_max(x.view(), y.view()).unwrap();
        assert!((path.fits[0].lambda1 - lmax).abs() < 1e-12 * lmax);
        assert!((path.fits[9].lambda1 - lmax * 1e-3).abs() < 1e-12 * lmax);
    }

    #[test]
    fn planted_support_recovered() {
        let (x, y) = planted(7, 60, 20, 0.01);
        let path = regularization_path(x.view(), y.view(), &PathConfig::default()).unwrap();
        let support = path.best_fit().support();
        assert!(support.contains(&2) && support.contains(&7), "{support:?}");
        assert!(support.len() <= 6, "{support:?}");
    }

    #[test]
    fn zero_response_path_is_all_zero() {
        let (x, _) = planted(8, 20, 8, 0.0);
        let y = Array1::zeros(20);
        let path = regularization_path(x.view(), y.view(), &PathConfig::default()).unwrap();
        assert_eq!(path.fits.len(), 20);
        assert!(path.fits.iter().all(|f| f.weights.iter().all(|&w| w == 0.0)));
    }

    fn two_drug_data(seed: u64) -> (ResponseMatrix, ExpressionMatrix) {
        let (x, y1) = planted(seed, 60, 20, 0.01);
        let y2 = Array1::from_shape_fn(60, |r| x[[r, 3]] + 2.0 * x[[r, 7]]);
        let cells: Vec<String> = (0..60).map(|p| format!("C{p:02}")).collect();
        let genes: Vec<String> = (0..20).map(|g| format!("G{g:02}")).collect();
        let mut values = Array2::zeros((60, 3));
        values.column_mut(0).assign(&y1);
        values.column_mut(1).assign(&y2);
        values.column_mut(2).assign(&y2);
        let resp = ResponseMatrix::dense(cells.clone(), vec!["A".into(), "B".into(), "B2".into()], values).unwrap();
        (resp, ExpressionMatrix::new(cells, genes, x).unwrap())
    }

    #[test]
    fn union_over_drugs() {
        let (resp, expr) = two_drug_data(9);
        let sel = select_genes(&resp, &expr, &PathConfig::default()).unwrap();
        for g in ["G02", "G03", "G07"] {
            assert!(sel.gene_ids.contains(&g.to_string()), "{:?}", sel.gene_ids);
        }
        assert!(sel.gene_ids.len() <= 3 + 4, "{:?}", sel.gene_ids);
        assert_eq!(sel.per_drug[1], sel.per_drug[2]);
        assert_eq!(sel, select_genes(&resp, &expr, &PathConfig::default()).unwrap());
    }

    #[test]
    fn pure_noise_drug_can_select_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let cells: Vec<String> = (0..30).map(|p| format!("C{p}")).collect();
        let x = Array2::from_shape_simple_fn((30, 6), || StandardNormal.sample(&mut rng));
        let y = Array2::from_shape_simple_fn((30, 1), || StandardNormal.sample(&mut rng));
        let resp = ResponseMatrix::dense(cells.clone(), vec!["N".into()], y).unwrap();
        let expr = ExpressionMatrix::new(cells, (0..6).map(|g| format!("G{g}")).collect(), x).unwrap();
        match select_genes(&resp, &expr, &PathConfig::default()) {
            Err(Error::NoGenesSelected) => {}
            Ok(sel) => assert!(sel.gene_ids.len() <= 6),
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn gene_list_round_trip() {
        let genes = vec!["TP53".to_string(), "KRAS".to_string()];
        let mut buf = Vec::new();
        write_gene_list(&mut buf, &genes).unwrap();
        assert_eq!(read_gene_list(buf.as_slice()).unwrap(), genes);
    }
}
