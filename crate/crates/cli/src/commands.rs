use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use drugrank::experiment::{generate_synthetic, Metric, SyntheticConfig};
use drugrank::genes::{read_gene_list, select_genes as run_selection, write_gene_list, PathConfig};
use drugrank::metrics::{self, summarize};
use drugrank::model::{rank_order, ModelMetadata};
use drugrank::similarity::{cosine_similarity, median_heuristic_gamma, rbf_similarity, spearman_profile_similarity};
use drugrank::splits::{default_similarity_threshold, holdout_split, kfold_split};
use drugrank::{
    extrapolate_cell_line, label_new_cell_lines, label_train_test, load_expression, load_response, Label, LabelSource,
    LatentModel, LossWeights, OptimizerConfig, SensitivityLabels, SimilarityKind, SimilarityMatrix, Stage,
    TrainingLabels,
};

use crate::{
    EvaluateArgs, Kind, LabelArgs, RankArgs, RankFormat, Scheme, SelectGenesArgs, SimilarityArgs, SimulateArgs,
    SplitArgs, TrainArgs,
};

/// Tags a library error with the pipeline stage it came from.
pub(crate) fn at<T>(stage: Stage, r: drugrank::Result<T>) -> anyhow::Result<T> {
    r.map_err(|e| anyhow!(e.at_stage(stage, None)))
}

fn sink(out: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn open(p: &Path) -> anyhow::Result<File> {
    File::open(p).with_context(|| format!("opening {}", p.display()))
}

/// Matrices written by other tools may carry any kind; the tag only
/// drives the unit-diagonal check.
fn load_similarity(p: &Path) -> anyhow::Result<SimilarityMatrix> {
    at(Stage::Load, SimilarityMatrix::load(p, SimilarityKind::Rbf))
}

pub fn simulate(a: SimulateArgs) -> anyhow::Result<()> {
    let cfg = SyntheticConfig {
        n_cell_lines: a.cell_lines,
        n_drugs: a.drugs,
        latent_dim: a.latent_dim,
        noise_sigma: a.noise,
        missing_frac: a.missing,
        expression_noise: a.expression_noise,
        clusters: a.clusters,
        seed: a.seed,
    };
    let data = generate_synthetic(&cfg)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    data.response.save(a.out.join("response.csv"))?;
    data.expression.save(a.out.join("expression.csv"))?;
    data.planted.save(a.out.join("planted"), None)?;
    if let Some(clusters) = &data.clusters {
        let mut w = csv::Writer::from_path(a.out.join("clusters.csv"))?;
        w.write_record(["cell_line", "cluster"])?;
        for (id, c) in data.response.cell_line_ids().iter().zip(clusters) {
            w.write_record([id.as_str(), &c.to_string()])?;
        }
        w.flush()?;
    }
    log::info!("wrote synthetic data to {}", a.out.display());
    Ok(())
}

pub fn label(a: LabelArgs) -> anyhow::Result<()> {
    let resp = at(Stage::Load, load_response(&a.response))?;
    let labels = match (a.scheme, &a.apply_to) {
        (Scheme::Train, None) => at(Stage::Label, label_train_test(&resp, &resp, a.theta))?.0,
        (Scheme::Train, Some(p)) => {
            let test = at(Stage::Load, load_response(p))?;
            at(Stage::Label, label_train_test(&resp, &test, a.theta))?.1
        }
        (Scheme::GroundTruth, None) => at(Stage::Label, label_new_cell_lines(&resp, a.theta))?,
        (Scheme::GroundTruth, Some(_)) => bail!("--apply-to only applies to the train scheme"),
    };
    labels.write_csv(sink(a.out.as_deref())?)?;
    Ok(())
}

pub fn split(a: SplitArgs) -> anyhow::Result<()> {
    let resp = at(Stage::Load, load_response(&a.response))?;
    let out = sink(a.out.as_deref())?;
    match (a.kfold, a.holdout) {
        (Some(k), None) => {
            let split = at(Stage::Split, kfold_split(&resp, k, a.seed))?;
            split.write_csv(&resp, out)?;
        }
        (None, Some(n)) => {
            let sim = load_similarity(a.sim.as_deref().expect("clap requires --sim"))?;
            let sim = at(Stage::Split, sim.restrict(resp.cell_line_ids()))?;
            let threshold = match a.threshold {
                Some(t) => t,
                None => at(Stage::Split, default_similarity_threshold(&sim, a.threshold_pct))?,
            };
            let split = at(Stage::Split, holdout_split(&resp, &sim, n, threshold, a.seed))?;
            split.write_csv(out)?;
        }
        _ => bail!("give exactly one of --kfold or --holdout"),
    }
    Ok(())
}

pub fn select_genes(a: SelectGenesArgs) -> anyhow::Result<()> {
    let resp = at(Stage::Load, load_response(&a.response))?;
    let expr = at(Stage::Load, load_expression(&a.expression))?;
    let cfg = PathConfig {
        n_lambdas: a.n_lambdas,
        l2_ratio: a.l2_ratio,
        tol: a.tol,
        max_iter: a.max_iter,
        seed: a.seed,
    };
    let sel = at(Stage::SelectGenes, run_selection(&resp, &expr, &cfg))?;
    write_gene_list(sink(a.out.as_deref())?, &sel.gene_ids)?;
    Ok(())
}

pub fn similarity(a: SimilarityArgs) -> anyhow::Result<()> {
    let sim = match a.kind {
        Kind::Spearman => {
            let p = a.response.as_deref().context("spearman similarity needs --response")?;
            let resp = at(Stage::Load, load_response(p))?;
            at(Stage::Similarity, spearman_profile_similarity(&resp))?
        }
        Kind::Cosine | Kind::Rbf => {
            let p = a
                .expression
                .as_deref()
                .context("cosine and rbf similarities need --expression")?;
            let mut expr = at(Stage::Load, load_expression(p))?;
            if let Some(g) = &a.genes {
                let genes = read_gene_list(open(g)?)?;
                expr = at(Stage::Load, expr.select(expr.cell_line_ids(), Some(&genes)))?;
            }
            let (ids, x) = (expr.cell_line_ids(), expr.values().view());
            if matches!(a.kind, Kind::Cosine) {
                at(Stage::Similarity, cosine_similarity(ids, x))?
            } else {
                let gamma = match a.gamma {
                    Some(g) => g,
                    None => at(Stage::Similarity, median_heuristic_gamma(x))?,
                };
                at(Stage::Similarity, rbf_similarity(ids, x, gamma))?
            }
        }
    };
    sim.write_csv(sink(a.out.as_deref())?)?;
    Ok(())
}

pub fn train(a: TrainArgs) -> anyhow::Result<()> {
    let resp = at(Stage::Load, load_response(&a.response))?;
    let labels = match &a.labels {
        Some(p) => at(
            Stage::Load,
            SensitivityLabels::from_reader(open(p)?, a.theta, LabelSource::TrainDerived),
        )?,
        None => at(Stage::Label, label_train_test(&resp, &resp, a.theta))?.0,
    };
    let training = at(Stage::Label, TrainingLabels::from_labels(&resp, &labels))?;
    let sim = match (&a.sim, a.gamma > 0.0) {
        (Some(p), _) => Some(load_similarity(p)?),
        (None, true) => bail!("gamma > 0 needs a similarity matrix (--sim), or pass --gamma 0"),
        (None, false) => None,
    };
    let weights = LossWeights {
        alpha: a.alpha,
        beta: a.beta,
        gamma: a.gamma,
    };
    let optimizer = OptimizerConfig {
        learning_rate: a.lr,
        max_epochs: a.epochs,
        convergence_tol: a.tol,
        sample_repeats: a.sample_repeats,
        seed: a.seed,
    };
    let fit = at(
        Stage::Train,
        drugrank::train(&resp, &training, sim.as_ref(), a.latent_dim, &weights, &optimizer),
    )?;
    let final_loss = *fit.trace.last().expect("trace holds the initial loss");
    let meta = ModelMetadata {
        latent_dim: a.latent_dim,
        weights,
        optimizer,
        theta: a.theta,
        similarity: a.sim.as_ref().map(|p| p.display().to_string()),
        converged: fit.converged,
        epochs: fit.trace.len() - 1,
        final_loss,
        trace: fit.trace.clone(),
    };
    fit.model.save(&a.out, Some(&meta))?;
    println!(
        "epochs {}  final loss {final_loss}  converged {}",
        fit.trace.len() - 1,
        fit.converged
    );
    Ok(())
}

fn indices(all: &[String], wanted: &[String], what: &str) -> anyhow::Result<Vec<usize>> {
    if wanted.is_empty() {
        return Ok((0..all.len()).collect());
    }
    wanted
        .iter()
        .map(|id| {
            all.iter()
                .position(|x| x == id)
                .ok_or_else(|| anyhow!("unknown {what} {id}"))
        })
        .collect()
}

pub fn rank(a: RankArgs) -> anyhow::Result<()> {
    let (model, _) = at(Stage::Load, LatentModel::load(&a.model))?;
    let drugs = indices(model.drug_ids(), &a.drugs, "drug")?;
    let mut rows: Vec<(String, Vec<drugrank::RankedDrug>)> = Vec::new();
    if !a.cell_lines.is_empty() || a.new.is_empty() {
        for p in indices(model.cell_line_ids(), &a.cell_lines, "cell line")? {
            rows.push((model.cell_line_ids()[p].clone(), model.rank_for_cell_line(p, &drugs)));
        }
    }
    if !a.new.is_empty() {
        let sim = load_similarity(a.sim.as_deref().expect("clap requires --sim"))?;
        for id in &a.new {
            let s = sim
                .index_of(id)
                .ok_or_else(|| anyhow!("cell line {id} is not in the similarity matrix"))?;
            let to_train = model
                .cell_line_ids()
                .iter()
                .map(|q| {
                    let q = sim
                        .index_of(q)
                        .ok_or_else(|| anyhow!("model cell line {q} is not in the similarity matrix"))?;
                    sim.get(s, q).ok_or_else(|| anyhow!("undefined similarity for {id}"))
                })
                .collect::<anyhow::Result<Vec<f64>>>()?;
            let u = at(Stage::Rank, extrapolate_cell_line(&model, &to_train, a.top_k))?;
            rows.push((id.clone(), model.rank_for_vector(u.view(), &drugs)));
        }
    }

    let mut w = csv::Writer::from_writer(sink(a.out.as_deref())?);
    match a.format {
        RankFormat::List => {
            w.write_record(["cell_line", "rank", "drug", "score"])?;
            for (cell, ranked) in &rows {
                for (r, d) in ranked.iter().enumerate() {
                    w.write_record([cell.as_str(), &(r + 1).to_string(), &d.id, &d.score.to_string()])?;
                }
            }
        }
        RankFormat::Matrix => {
            let mut header = vec!["cell_line".to_owned()];
            header.extend(drugs.iter().map(|&i| model.drug_ids()[i].clone()));
            w.write_record(&header)?;
            for (cell, ranked) in &rows {
                let mut rec = vec![cell.clone()];
                for &i in &drugs {
                    let d = ranked.iter().find(|d| d.index == i).expect("every drug is ranked");
                    rec.push(d.score.to_string());
                }
                w.write_record(&rec)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_measures(names: &[String], ks: &[usize]) -> anyhow::Result<Vec<Metric>> {
    if ks.contains(&0) {
        bail!("k values must be positive");
    }
    let mut out = Vec::new();
    for n in names {
        match n.to_ascii_lowercase().as_str() {
            "ap" => out.extend(ks.iter().map(|&k| Metric::Ap(k))),
            "ah" => out.extend(ks.iter().map(|&k| Metric::Ah(k))),
            "ci" => out.push(Metric::Ci),
            "sci" => out.push(Metric::Sci),
            "at" => out.extend(ks.iter().map(|&k| Metric::At(k))),
            "nt" => out.extend(ks.iter().map(|&k| Metric::Nt(k))),
            other => bail!("unknown metric {other:?}; expected ap, ah, ci, sci, at or nt"),
        }
    }
    Ok(out)
}

pub fn evaluate(a: EvaluateArgs) -> anyhow::Result<()> {
    let measures = parse_measures(&a.metrics, &a.k)?;
    if measures.iter().any(|m| matches!(m, Metric::Nt(_))) && a.new_drugs.is_empty() {
        bail!("NT@k needs --new-drugs");
    }
    let pred = at(Stage::Load, load_response(&a.predictions))?;
    let truth = at(Stage::Load, load_response(&a.truth))?;
    let labels = at(
        Stage::Load,
        SensitivityLabels::from_reader(open(&a.labels)?, f64::NAN, LabelSource::GroundTruthDerived),
    )?;
    let ids = truth.drug_ids();
    let is_new: Vec<bool> = ids.iter().map(|d| a.new_drugs.contains(d)).collect();

    let mut w = csv::Writer::from_writer(sink(a.out.as_deref())?);
    let mut header: Vec<String> = ["cell_line", "n_drugs", "n_sensitive"].map(String::from).to_vec();
    header.extend(measures.iter().map(|m| m.to_string()));
    w.write_record(&header)?;
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); measures.len()];
    for (p, cell) in truth.cell_line_ids().iter().enumerate() {
        let pp = pred
            .cell_line_index(cell)
            .ok_or_else(|| anyhow!("cell line {cell} has no predictions"))?;
        let lp = labels.cell_line_ids().iter().position(|c| c == cell);
        let mut scores = vec![0.0; ids.len()];
        let mut sensitive = vec![false; ids.len()];
        let mut subset = Vec::new();
        for (i, _) in truth.row_observed(p) {
            let Some(s) = pred.drug_index(&ids[i]).and_then(|j| pred.get(pp, j)) else {
                continue;
            };
            scores[i] = s;
            sensitive[i] = lp.is_some_and(|lp| {
                labels
                    .drug_ids()
                    .iter()
                    .position(|d| d == &ids[i])
                    .is_some_and(|j| labels.get(lp, j) == Label::Sensitive)
            });
            subset.push(i);
        }
        let full_truth: Vec<f64> = (0..ids.len()).map(|i| truth.get(p, i).unwrap_or(0.0)).collect();
        let order = rank_order(ids, &scores, &subset);
        let torder = metrics::truth_order(ids, &full_truth, &subset);
        let ranked: Vec<bool> = order.iter().map(|&i| sensitive[i]).collect();
        let t_sub: Vec<f64> = subset.iter().map(|&i| full_truth[i]).collect();
        let s_sub: Vec<f64> = subset.iter().map(|&i| scores[i]).collect();
        let f_sub: Vec<bool> = subset.iter().map(|&i| sensitive[i]).collect();
        let n_sens = f_sub.iter().filter(|&&s| s).count();
        let any_sens = n_sens > 0;
        let mut rec = vec![cell.clone(), subset.len().to_string(), n_sens.to_string()];
        for (m, col) in measures.iter().zip(&mut columns) {
            let v = match *m {
                Metric::Ap(k) => any_sens.then(|| metrics::ap_at_k(&ranked, k)),
                Metric::Ah(k) => any_sens.then(|| metrics::ah_at_k(&ranked, k)),
                Metric::Ci => metrics::concordance_index(&t_sub, &s_sub),
                Metric::Sci => metrics::sensitive_ci(&t_sub, &s_sub, &f_sub),
                Metric::At(k) => metrics::at_k(&order, &torder, k).ok(),
                Metric::Nt(k) => metrics::nt_k(&order, &torder, &is_new, k),
            };
            rec.push(v.map(|x| x.to_string()).unwrap_or_default());
            col.push(v);
        }
        w.write_record(&rec)?;
    }
    let summaries: Vec<_> = columns.iter().map(|c| summarize(c)).collect();
    let mut mean = vec!["mean".to_owned(), String::new(), String::new()];
    mean.extend(
        summaries
            .iter()
            .map(|s| s.mean.map(|x| x.to_string()).unwrap_or_default()),
    );
    w.write_record(&mean)?;
    let mut excluded = vec!["excluded".to_owned(), String::new(), String::new()];
    excluded.extend(summaries.iter().map(|s| s.n_excluded.to_string()));
    w.write_record(&excluded)?;
    w.flush()?;
    Ok(())
}
