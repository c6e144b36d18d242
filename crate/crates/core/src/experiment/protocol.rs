use std::fmt;

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use super::config::{ExperimentConfig, GridPoint, Protocol};
use super::synthetic::generate_synthetic;
use crate::data::{load_expression, load_response, ExpressionMatrix, ResponseMatrix};
use crate::error::{Error, Result, Stage};
use crate::genes::select_genes;
use crate::labeling::{label_new_cell_lines, label_train_test, SensitivityLabels};
use crate::metrics::{self, Summary};
use crate::model::{extrapolate_cell_line, rank_order, train, LatentModel, OptimizerConfig, TrainingLabels};
use crate::similarity::{cosine_similarity, median_heuristic_gamma, rbf_similarity, SimilarityKind, SimilarityMatrix};
use crate::splits::{default_similarity_threshold, holdout_split, kfold_split, HoldoutSplit};

/// Responses plus optional expression, aligned on cell lines.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub response: ResponseMatrix,
    pub expression: Option<ExpressionMatrix>,
}

impl Dataset {
    pub fn new(response: ResponseMatrix, expression: Option<ExpressionMatrix>) -> Result<Self> {
        let expression = expression.map(|e| e.align_to(&response)).transpose()?;
        Ok(Self { response, expression })
    }

    /// Loads the configured files, or generates the configured synthetic data.
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let load = || -> Result<Self> {
            match (&cfg.response, &cfg.synthetic) {
                (Some(r), _) => {
                    let resp = load_response(r)?;
                    let expr = cfg.expression.as_ref().map(load_expression).transpose()?;
                    Self::new(resp, expr)
                }
                (None, Some(s)) => {
                    let d = generate_synthetic(s)?;
                    Ok(Self {
                        response: d.response,
                        expression: Some(d.expression),
                    })
                }
                (None, None) => Err(Error::Config("no data source configured".into())),
            }
        };
        load().map_err(|e| e.at_stage(Stage::Load, None))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Ap(usize),
    Ah(usize),
    Ci,
    Sci,
    At(usize),
    Nt(usize),
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Ap(k) => write!(f, "AP@{k}"),
            Metric::Ah(k) => write!(f, "AH@{k}"),
            Metric::Ci => f.write_str("CI"),
            Metric::Sci => f.write_str("sCI"),
            Metric::At(k) => write!(f, "AT@{k}"),
            Metric::Nt(k) => write!(f, "NT@{k}"),
        }
    }
}

/// Metrics reported by a protocol, in column order.
pub fn protocol_metrics(protocol: Protocol, ks: &[usize]) -> Vec<Metric> {
    let mut out: Vec<Metric> = ks.iter().map(|&k| Metric::Ap(k)).collect();
    out.extend(ks.iter().map(|&k| Metric::Ah(k)));
    out.extend([Metric::Ci, Metric::Sci]);
    if protocol == Protocol::Transductive {
        out.extend(ks.iter().map(|&k| Metric::At(k)));
        out.extend(ks.iter().map(|&k| Metric::Nt(k)));
    }
    out
}

/// Where an evaluated cell line's latent vector comes from.
#[derive(Debug, Clone, Copy)]
enum VectorSource {
    /// Column of the trained model.
    Trained(usize),
    /// Row of the test-by-train similarity block.
    Extrapolated(usize),
}

/// One cell line's test data.
#[derive(Debug, Clone)]
struct EvalCase {
    cell_line: String,
    source: VectorSource,
    /// Test drugs (global indices) with their responses and labels.
    drugs: Vec<usize>,
    truth: Vec<f64>,
    sensitive: Vec<bool>,
    /// Transductive ranking: every observed drug, full-length responses
    /// (NaN where unobserved) and whether each drug is a test drug.
    all_drugs: Option<(Vec<usize>, Vec<f64>, Vec<bool>)>,
}

/// Training inputs and test cases of one fold (the single hold-out split
/// counts as fold 0).
#[derive(Debug, Clone)]
struct FoldData {
    fold: usize,
    train: ResponseMatrix,
    labels: TrainingLabels,
    /// Regularizer similarities over the training cell lines.
    sim: Option<SimilarityMatrix>,
    /// Test-by-train similarities for extrapolation.
    extrapolation: Option<Array2<f64>>,
    cases: Vec<EvalCase>,
    seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellLineResult {
    pub fold: usize,
    pub cell_line: String,
    pub n_test: usize,
    pub n_sensitive: usize,
    /// Aligned with [`ExperimentResult::metrics`].
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub summaries: Vec<Summary>,
    pub epochs: usize,
    pub converged: bool,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub point: GridPoint,
    pub folds: Vec<FoldResult>,
    pub cell_lines: Vec<CellLineResult>,
    /// Mean over folds of the per-fold means.
    pub means: Vec<Option<f64>>,
    /// Cell lines without a defined value, summed over folds.
    pub excluded: Vec<usize>,
    /// Full-data loss traces, one per fold.
    pub traces: Vec<Vec<f64>>,
}

impl PointResult {
    pub fn mean(&self, metric_index: usize) -> Option<f64> {
        self.means[metric_index]
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub protocol: Protocol,
    pub seed: u64,
    pub theta: f64,
    pub metrics: Vec<Metric>,
    /// Completed grid points in lexicographic order.
    pub points: Vec<PointResult>,
    /// Test-drug sensitivity labels per fold and evaluated cell line, the
    /// input of the random-ranking baseline.
    pub test_labels: Vec<Vec<Vec<bool>>>,
    pub holdout: Option<HoldoutSplit>,
}

impl ExperimentResult {
    pub fn metric_index(&self, m: Metric) -> Option<usize> {
        self.metrics.iter().position(|&x| x == m)
    }
}

/// SplitMix64 finalizer: well-spread seeds from `(base, stream)`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn features_similarity(cfg: &ExperimentConfig, expr: &ExpressionMatrix) -> Result<SimilarityMatrix> {
    let x = expr.values().view();
    match cfg.similarity {
        SimilarityKind::Cosine => cosine_similarity(expr.cell_line_ids(), x),
        _ => {
            let gamma = match cfg.similarity_gamma {
                Some(g) => g,
                None => median_heuristic_gamma(x)?,
            };
            rbf_similarity(expr.cell_line_ids(), x, gamma)
        }
    }
}

/// Similarity over every cell line of `expr`, computed on the genes
/// selected from `train` responses when gene selection is enabled.
fn selected_similarity(
    cfg: &ExperimentConfig,
    train: &ResponseMatrix,
    expr: &ExpressionMatrix,
) -> Result<SimilarityMatrix> {
    let features = if cfg.select_genes {
        let train_expr = expr.select(train.cell_line_ids(), None)?;
        let genes = select_genes(train, &train_expr, &cfg.genes).map_err(|e| e.at_stage(Stage::SelectGenes, None))?;
        expr.select(expr.cell_line_ids(), Some(&genes.gene_ids))?
    } else {
        expr.clone()
    };
    features_similarity(cfg, &features).map_err(|e| e.at_stage(Stage::Similarity, None))
}

fn stage<T>(r: Result<T>, s: Stage) -> Result<T> {
    r.map_err(|e| match e {
        e @ Error::Stage { .. } => e,
        e => e.at_stage(s, None),
    })
}

fn test_case(
    cell_line: &str,
    source: VectorSource,
    test: &ResponseMatrix,
    labels: &SensitivityLabels,
    p: usize,
) -> Option<EvalCase> {
    let obs: Vec<(usize, f64)> = test.row_observed(p).collect();
    if obs.is_empty() {
        return None;
    }
    Some(EvalCase {
        cell_line: cell_line.to_owned(),
        source,
        drugs: obs.iter().map(|&(i, _)| i).collect(),
        truth: obs.iter().map(|&(_, r)| r).collect(),
        sensitive: obs.iter().map(|&(i, _)| labels.get(p, i).is_sensitive()).collect(),
        all_drugs: None,
    })
}

fn prepare_kfold(cfg: &ExperimentConfig, data: &Dataset, needs_sim: bool) -> Result<Vec<FoldData>> {
    let resp = &data.response;
    let split = stage(kfold_split(resp, cfg.folds, cfg.seed), Stage::Split)?;
    (0..cfg.folds)
        .map(|f| {
            let (train, test) = stage(split.partition(resp, f), Stage::Split)?;
            let (lab_tr, lab_te) = stage(label_train_test(&train, &test, cfg.theta), Stage::Label)?;
            let labels = stage(TrainingLabels::from_labels(&train, &lab_tr), Stage::Label)?;
            let sim = match (&data.expression, needs_sim) {
                (Some(expr), true) => Some(selected_similarity(cfg, &train, expr)?),
                _ => None,
            };
            let test_mask = split.test_mask(f);
            let cases = (0..resp.n_cell_lines())
                .filter_map(|p| {
                    let mut case = test_case(&resp.cell_line_ids()[p], VectorSource::Trained(p), &test, &lab_te, p)?;
                    if cfg.protocol == Protocol::Transductive {
                        let all: Vec<usize> = resp.row_observed(p).map(|(i, _)| i).collect();
                        let truth: Vec<f64> = (0..resp.n_drugs())
                            .map(|i| resp.get(p, i).unwrap_or(f64::NAN))
                            .collect();
                        let is_new: Vec<bool> = (0..resp.n_drugs()).map(|i| test_mask[[p, i]]).collect();
                        case.all_drugs = Some((all, truth, is_new));
                    }
                    Some(case)
                })
                .collect();
            Ok(FoldData {
                fold: f,
                train,
                labels,
                sim,
                extrapolation: None,
                cases,
                seed: derive_seed(cfg.seed, f as u64 + 1),
            })
        })
        .collect()
}

fn prepare_holdout(cfg: &ExperimentConfig, data: &Dataset) -> Result<(FoldData, HoldoutSplit)> {
    let resp = &data.response;
    let expr = data
        .expression
        .as_ref()
        .ok_or_else(|| Error::Config("the holdout protocol needs an expression matrix".into()))?;
    let full_sim = stage(features_similarity(cfg, expr), Stage::Similarity)?;
    let threshold = match cfg.holdout.similarity_threshold {
        Some(t) => t,
        None => stage(
            default_similarity_threshold(&full_sim, cfg.holdout.threshold_percentile),
            Stage::Split,
        )?,
    };
    let split = stage(
        holdout_split(resp, &full_sim, cfg.holdout.n_new, threshold, cfg.seed),
        Stage::Split,
    )?;
    log::info!(
        "holding out {} cell lines at similarity threshold {threshold:.4}",
        split.test_cell_lines.len()
    );

    let drugs = resp.drug_ids();
    let train = stage(resp.restrict_partial(&split.train_cell_lines, drugs), Stage::Split)?;
    let test = stage(resp.restrict_partial(&split.test_cell_lines, drugs), Stage::Split)?;
    let (lab_tr, _) = stage(label_train_test(&train, &train, cfg.theta), Stage::Label)?;
    let lab_te = stage(label_new_cell_lines(&test, cfg.theta), Stage::Label)?;
    let labels = stage(TrainingLabels::from_labels(&train, &lab_tr), Stage::Label)?;

    let sim = selected_similarity(cfg, &train, expr)?;
    let extrapolation = stage(
        sim.block(&split.test_cell_lines, &split.train_cell_lines),
        Stage::Similarity,
    )?;
    let sim = stage(sim.restrict(&split.train_cell_lines), Stage::Similarity)?;

    let cases = split
        .test_cell_lines
        .iter()
        .enumerate()
        .filter_map(|(r, id)| test_case(id, VectorSource::Extrapolated(r), &test, &lab_te, r))
        .collect();
    let fold = FoldData {
        fold: 0,
        train,
        labels,
        sim: Some(sim),
        extrapolation: Some(extrapolation),
        cases,
        seed: derive_seed(cfg.seed, 1),
    };
    Ok((fold, split))
}

fn scores_for_case(model: &LatentModel, fold: &FoldData, case: &EvalCase, top_k: usize) -> Result<Array1<f64>> {
    match case.source {
        VectorSource::Trained(p) => Ok(model.scores(p)),
        VectorSource::Extrapolated(r) => {
            let block = fold.extrapolation.as_ref().expect("hold-out fold carries similarities");
            let sims: Vec<f64> = block.row(r).to_vec();
            let u = extrapolate_cell_line(model, &sims, top_k)?;
            Ok(model.scores_for(u.view()))
        }
    }
}

fn evaluate_case(metrics: &[Metric], ids: &[String], scores: &Array1<f64>, case: &EvalCase) -> Vec<Option<f64>> {
    let s = scores.as_slice().expect("contiguous scores");
    let order = rank_order(ids, s, &case.drugs);
    let pos: std::collections::HashMap<usize, usize> = case.drugs.iter().enumerate().map(|(j, &i)| (i, j)).collect();
    let ranked_sensitive: Vec<bool> = order.iter().map(|i| case.sensitive[pos[i]]).collect();
    let predicted: Vec<f64> = case.drugs.iter().map(|&i| s[i]).collect();
    let any_sensitive = case.sensitive.iter().any(|&x| x);

    let transductive = case.all_drugs.as_ref().map(|(all, truth, is_new)| {
        let pred = rank_order(ids, s, all);
        let truth_o = metrics::truth_order(ids, truth, all);
        (pred, truth_o, is_new)
    });

    metrics
        .iter()
        .map(|m| match *m {
            Metric::Ap(k) => any_sensitive.then(|| metrics::ap_at_k(&ranked_sensitive, k)),
            Metric::Ah(k) => any_sensitive.then(|| metrics::ah_at_k(&ranked_sensitive, k)),
            Metric::Ci => metrics::concordance_index(&case.truth, &predicted),
            Metric::Sci => metrics::sensitive_ci(&case.truth, &predicted, &case.sensitive),
            Metric::At(k) => transductive.as_ref().and_then(|(p, t, _)| metrics::at_k(p, t, k).ok()),
            Metric::Nt(k) => transductive
                .as_ref()
                .and_then(|(p, t, new)| metrics::nt_k(p, t, new, k)),
        })
        .collect()
}

fn run_point(cfg: &ExperimentConfig, metrics: &[Metric], folds: &[FoldData], point: GridPoint) -> Result<PointResult> {
    let tag = || Some(point.to_string());
    let mut fold_results = Vec::with_capacity(folds.len());
    let mut cell_lines = Vec::new();
    let mut traces = Vec::with_capacity(folds.len());
    for fold in folds {
        log::info!("fold {} at {point}", fold.fold);
        let opt = OptimizerConfig {
            seed: fold.seed,
            ..cfg.optimizer.clone()
        };
        let trained = train(
            &fold.train,
            &fold.labels,
            fold.sim.as_ref(),
            point.latent_dim,
            &point.weights(),
            &opt,
        )
        .map_err(|e| e.at_stage(Stage::Train, tag()))?;

        let mut per_metric: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(fold.cases.len()); metrics.len()];
        for case in &fold.cases {
            let scores = scores_for_case(&trained.model, fold, case, cfg.holdout.top_k)
                .map_err(|e| e.at_stage(Stage::Rank, tag()))?;
            let values = evaluate_case(metrics, trained.model.drug_ids(), &scores, case);
            for (acc, v) in per_metric.iter_mut().zip(&values) {
                acc.push(*v);
            }
            cell_lines.push(CellLineResult {
                fold: fold.fold,
                cell_line: case.cell_line.clone(),
                n_test: case.drugs.len(),
                n_sensitive: case.sensitive.iter().filter(|&&s| s).count(),
                values,
            });
        }
        fold_results.push(FoldResult {
            fold: fold.fold,
            summaries: per_metric.iter().map(|v| metrics::summarize(v)).collect(),
            epochs: trained.trace.len() - 1,
            converged: trained.converged,
            final_loss: *trained.trace.last().expect("trace starts at initialization"),
        });
        traces.push(trained.trace);
    }

    let means = (0..metrics.len())
        .map(|j| metrics::summarize(&fold_results.iter().map(|f| f.summaries[j].mean).collect::<Vec<_>>()).mean)
        .collect();
    let excluded = (0..metrics.len())
        .map(|j| fold_results.iter().map(|f| f.summaries[j].n_excluded).sum())
        .collect();
    Ok(PointResult {
        point,
        folds: fold_results,
        cell_lines,
        means,
        excluded,
        traces,
    })
}

/// Outcome of [`run_protocol`]: completed grid points, plus the first
/// failure if any grid point failed.
#[derive(Debug)]
pub struct ProtocolRun {
    pub result: ExperimentResult,
    pub error: Option<Error>,
}

/// Runs the configured protocol for every grid point. Fold preparation
/// (split, labels, gene selection, similarities) is shared by all points;
/// grid points train concurrently and are merged in lexicographic order.
/// Preparation failures abort; a failing grid point is reported in
/// [`ProtocolRun::error`] while the other points' results are kept.
pub fn run_protocol(cfg: &ExperimentConfig, data: &Dataset) -> Result<ProtocolRun> {
    cfg.validate()?;
    let points = cfg.grid.points();
    let metrics = protocol_metrics(cfg.protocol, &cfg.ks);
    let needs_sim = points.iter().any(|p| p.gamma != 0.0);
    let (folds, holdout) = match cfg.protocol {
        Protocol::Kfold | Protocol::Transductive => (prepare_kfold(cfg, data, needs_sim)?, None),
        Protocol::Holdout => {
            let (fold, split) = prepare_holdout(cfg, data)?;
            (vec![fold], Some(split))
        }
    };
    let outcomes: Vec<Result<PointResult>> = points
        .par_iter()
        .map(|&p| run_point(cfg, &metrics, &folds, p))
        .collect();
    let mut completed = Vec::with_capacity(outcomes.len());
    let mut error = None;
    for o in outcomes {
        match o {
            Ok(r) => completed.push(r),
            Err(e) => {
                log::error!("{e}");
                error.get_or_insert(e);
            }
        }
    }
    let test_labels = folds
        .iter()
        .map(|f| f.cases.iter().map(|c| c.sensitive.clone()).collect())
        .collect();
    Ok(ProtocolRun {
        result: ExperimentResult {
            protocol: cfg.protocol,
            seed: cfg.seed,
            theta: cfg.theta,
            metrics,
            points: completed,
            test_labels,
            holdout,
        },
        error,
    })
}

/// Best completed grid point for one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct BestPoint {
    pub metric: Metric,
    pub point: GridPoint,
    pub value: f64,
}

/// Argmax of every metric over the completed grid points. Equal values go
/// to the lexicographically smallest `(l, alpha, beta, gamma)`; metrics
/// undefined at every point are omitted.
pub fn grid_search(result: &ExperimentResult) -> Vec<BestPoint> {
    result
        .metrics
        .iter()
        .enumerate()
        .filter_map(|(j, &metric)| {
            let mut best: Option<(&PointResult, f64)> = None;
            for pr in &result.points {
                let Some(v) = pr.means[j] else { continue };
                let better = match best {
                    None => true,
                    Some((b, bv)) => v > bv || (v == bv && pr.point.cmp_tuple(&b.point).is_lt()),
                };
                if better {
                    best = Some((pr, v));
                }
            }
            best.map(|(pr, value)| BestPoint {
                metric,
                point: pr.point,
                value,
            })
        })
        .collect()
}
