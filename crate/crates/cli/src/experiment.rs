use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use drugrank::experiment::{grid_search, render_summary, run_experiment, ExperimentConfig};
use toml::Value;

/// Settings come from `--config` (or defaults), then the named flags, then
/// every `--set`, each overriding the previous.
#[derive(Args)]
pub struct ExperimentArgs {
    /// TOML experiment file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    response: Option<PathBuf>,
    #[arg(long)]
    expression: Option<PathBuf>,
    /// Use generated data (defaults, adjustable with `--set synthetic.<key>=...`).
    #[arg(long)]
    synthetic: bool,
    #[arg(long)]
    theta: Option<f64>,
    /// kfold, transductive or holdout.
    #[arg(long)]
    protocol: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    /// Cutoffs for the @k metrics.
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    latent_dim: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    beta: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    gamma: Vec<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    sample_repeats: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report directory.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Cell lines held out (holdout protocol).
    #[arg(long)]
    n_new: Option<usize>,
    /// Neighbours averaged for a held-out cell line.
    #[arg(long)]
    top_k: Option<usize>,
    /// cosine, rbf or spearman-profile.
    #[arg(long)]
    similarity: Option<String>,
    #[arg(long)]
    similarity_gamma: Option<f64>,
    /// Build similarities on all genes.
    #[arg(long)]
    no_select_genes: bool,
    /// Any config key as a dotted path, e.g. `holdout.threshold_percentile=80`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn put(root: &mut Value, path: &str, value: Value) -> anyhow::Result<()> {
    let mut cur = root;
    let mut keys = path.split('.').peekable();
    while let Some(key) = keys.next() {
        if key.is_empty() {
            bail!("bad config key {path:?}");
        }
        let table = cur
            .as_table_mut()
            .with_context(|| format!("{path:?}: a parent of {key:?} is not a table"))?;
        if keys.peek().is_none() {
            table.insert(key.to_owned(), value);
            return Ok(());
        }
        cur = table
            .entry(key.to_owned())
            .or_insert_with(|| Value::Table(Default::default()));
    }
    unreachable!("split yields at least one key")
}

/// TOML literal when it parses as one, otherwise a bare string.
fn parse_value(text: &str) -> Value {
    toml::from_str::<toml::Table>(&format!("v = {text}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(text.to_owned()))
}

fn path_value(p: &std::path::Path) -> Value {
    Value::String(p.display().to_string())
}

fn floats(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| Value::Float(x)).collect())
}

fn ints<T: Copy + Into<u64>>(v: &[T]) -> anyhow::Result<Value> {
    v.iter()
        .map(|&x| Ok(Value::Integer(i64::try_from(x.into())?)))
        .collect::<anyhow::Result<Vec<_>>>()
        .map(Value::Array)
}

fn int(x: u64) -> anyhow::Result<Value> {
    Ok(Value::Integer(i64::try_from(x)?))
}

impl ExperimentArgs {
    pub fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let base = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        let mut v = Value::try_from(&base)?;
        if let Some(p) = &self.response {
            put(&mut v, "response", path_value(p))?;
        }
        if let Some(p) = &self.expression {
            put(&mut v, "expression", path_value(p))?;
        }
        if self.synthetic && base.synthetic.is_none() {
            put(&mut v, "synthetic", Value::Table(Default::default()))?;
        }
        if let Some(x) = self.theta {
            put(&mut v, "theta", Value::Float(x))?;
        }
        if let Some(x) = &self.protocol {
            put(&mut v, "protocol", Value::String(x.clone()))?;
        }
        if let Some(x) = self.folds {
            put(&mut v, "folds", int(x as u64)?)?;
        }
        let ks: Vec<u64> = self.k.iter().map(|&k| k as u64).collect();
        if !ks.is_empty() {
            put(&mut v, "ks", ints(&ks)?)?;
        }
        let ls: Vec<u64> = self.latent_dim.iter().map(|&l| l as u64).collect();
        if !ls.is_empty() {
            put(&mut v, "grid.latent_dim", ints(&ls)?)?;
        }
        for (key, xs) in [
            ("grid.alpha", &self.alpha),
            ("grid.beta", &self.beta),
            ("grid.gamma", &self.gamma),
        ] {
            if !xs.is_empty() {
                put(&mut v, key, floats(xs))?;
            }
        }
        if let Some(x) = self.lr {
            put(&mut v, "optimizer.learning_rate", Value::Float(x))?;
        }
        if let Some(x) = self.epochs {
            put(&mut v, "optimizer.max_epochs", int(x as u64)?)?;
        }
        if let Some(x) = self.tol {
            put(&mut v, "optimizer.convergence_tol", Value::Float(x))?;
        }
        if let Some(x) = self.sample_repeats {
            put(&mut v, "optimizer.sample_repeats", int(x as u64)?)?;
        }
        if let Some(x) = self.seed {
            put(&mut v, "seed", int(x)?)?;
        }
        if let Some(p) = &self.output {
            put(&mut v, "output", path_value(p))?;
        }
        if let Some(x) = self.n_new {
            put(&mut v, "holdout.n_new", int(x as u64)?)?;
        }
        if let Some(x) = self.top_k {
            put(&mut v, "holdout.top_k", int(x as u64)?)?;
        }
        if let Some(x) = &self.similarity {
            put(&mut v, "similarity", Value::String(x.clone()))?;
        }
        if let Some(x) = self.similarity_gamma {
            put(&mut v, "similarity_gamma", Value::Float(x))?;
        }
        if self.no_select_genes {
            put(&mut v, "select_genes", Value::Boolean(false))?;
        }
        for s in &self.set {
            let (key, value) = s
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got {s:?}"))?;
            put(&mut v, key.trim(), parse_value(value.trim()))?;
        }
        let cfg: ExperimentConfig = v.try_into().context("invalid experiment settings")?;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(a: ExperimentArgs) -> anyhow::Result<()> {
    let cfg = a.resolve()?;
    let (result, files) = run_experiment(&cfg)?;
    log::info!("wrote {} files to {}", files.len(), cfg.output.display());
    print!("{}", render_summary(&result));
    Ok(())
}

pub fn grid(a: ExperimentArgs) -> anyhow::Result<()> {
    let cfg = a.resolve()?;
    let (result, _) = run_experiment(&cfg)?;
    let best = grid_search(&result);
    if best.is_empty() {
        bail!("no metric is defined at any grid point");
    }
    println!("metric\tvalue\tpoint");
    for b in best {
        println!("{}\t{:.4}\t{}", b.metric, b.value, b.point);
    }
    println!("reports in {}", cfg.output.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    #[derive(Parser)]
    struct Wrap {
        #[command(flatten)]
        args: ExperimentArgs,
    }

    fn resolve(argv: &[&str]) -> anyhow::Result<ExperimentConfig> {
        Wrap::try_parse_from([&["x"], argv].concat())?.args.resolve()
    }

    #[test]
    fn values_parse_as_toml_or_fall_back_to_strings() {
        assert_eq!(parse_value("3"), Value::Integer(3));
        assert_eq!(parse_value("[1.5, 2.0]"), floats(&[1.5, 2.0]));
        assert_eq!(parse_value("holdout"), Value::String("holdout".into()));
    }

    #[test]
    fn flags_then_sets_override_defaults() {
        let cfg = resolve(&[
            "--synthetic",
            "--alpha",
            "0,0.5",
            "--protocol",
            "holdout",
            "--set",
            "holdout.top_k=3",
            "--set",
            "grid.alpha=[1.0]",
        ])
        .unwrap();
        assert_eq!(cfg.protocol, drugrank::experiment::Protocol::Holdout);
        assert_eq!(cfg.grid.alpha, vec![1.0]);
        assert_eq!(cfg.holdout.top_k, 3);
        assert!(cfg.synthetic.is_some());
    }

    #[test]
    fn bad_paths_are_rejected() {
        assert!(resolve(&["--synthetic", "--set", "theta"]).is_err());
        assert!(resolve(&["--synthetic", "--set", "theta.x=1"]).is_err());
        assert!(resolve(&["--synthetic", "--set", ".a=1"]).is_err());
    }
}
