//! `drugrank` command-line tool.

mod commands;
mod experiment;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "drugrank", version, about = "Per-cell-line drug ranking with latent factors")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted synthetic dataset.
    Simulate(SimulateArgs),
    /// Label drugs as sensitive per cell line.
    Label(LabelArgs),
    /// Assign folds or hold out cell lines.
    Split(SplitArgs),
    /// Elastic-net gene selection over all drugs.
    SelectGenes(SelectGenesArgs),
    /// Cell-line similarity matrix.
    Similarity(SimilarityArgs),
    /// Fit a ranking model.
    Train(TrainArgs),
    /// Rank drugs with a trained model.
    Rank(RankArgs),
    /// Score predictions against responses and labels.
    Evaluate(EvaluateArgs),
    /// Run an experiment over a grid and report the best point per metric.
    Grid(experiment::ExperimentArgs),
    /// Run the full pipeline and write reports.
    Run(experiment::ExperimentArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 40)]
    cell_lines: usize,
    #[arg(long, default_value_t = 60)]
    drugs: usize,
    #[arg(long, default_value_t = 5)]
    latent_dim: usize,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 0.2)]
    missing: f64,
    #[arg(long, default_value_t = 0.1)]
    expression_noise: f64,
    /// Cell lines in the same cluster share one latent vector.
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    /// Thresholds from `--response`, optionally applied to `--apply-to`.
    Train,
    /// Each cell line labeled from its own responses.
    GroundTruth,
}

#[derive(Args)]
struct LabelArgs {
    #[arg(long)]
    response: PathBuf,
    #[arg(long, default_value_t = 5.0)]
    theta: f64,
    #[arg(long, value_enum, default_value_t = Scheme::Train)]
    scheme: Scheme,
    /// Label this matrix with thresholds from `--response` (train scheme).
    #[arg(long)]
    apply_to: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    response: PathBuf,
    /// Number of folds.
    #[arg(long, conflicts_with = "holdout")]
    kfold: Option<usize>,
    /// Number of cell lines to hold out.
    #[arg(long, requires = "sim")]
    holdout: Option<usize>,
    /// Similarity matrix for the hold-out split.
    #[arg(long)]
    sim: Option<PathBuf>,
    #[arg(long, default_value_t = 90.0)]
    threshold_pct: f64,
    /// Explicit similarity threshold; overrides `--threshold-pct`.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelectGenesArgs {
    #[arg(long)]
    response: PathBuf,
    #[arg(long)]
    expression: PathBuf,
    #[arg(long, default_value_t = 20)]
    n_lambdas: usize,
    #[arg(long, default_value_t = 0.5)]
    l2_ratio: f64,
    #[arg(long, default_value_t = 1e-7)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    /// Seed of the cross-validation shuffle.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Cosine,
    Rbf,
    Spearman,
}

#[derive(Args)]
struct SimilarityArgs {
    #[arg(long, value_enum, default_value_t = Kind::Rbf)]
    kind: Kind,
    /// Expression matrix (cosine, rbf).
    #[arg(long)]
    expression: Option<PathBuf>,
    /// Response matrix (spearman).
    #[arg(long)]
    response: Option<PathBuf>,
    /// RBF bandwidth; median heuristic when absent.
    #[arg(long)]
    gamma: Option<f64>,
    /// Restrict expression to the genes listed in this file.
    #[arg(long)]
    genes: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    response: PathBuf,
    /// Label CSV; derived from `--response` with `--theta` when absent.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = 5.0)]
    theta: f64,
    #[arg(long, default_value_t = 10)]
    latent_dim: usize,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    #[arg(long, default_value_t = 100.0)]
    gamma: f64,
    #[arg(long, default_value_t = 2.0)]
    lr: f64,
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 3)]
    sample_repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cell-line similarity matrix; needed when gamma > 0.
    #[arg(long)]
    sim: Option<PathBuf>,
    /// Model directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum RankFormat {
    /// cell_line,rank,drug,score
    List,
    /// Cell-line × drug score table.
    Matrix,
}

#[derive(Args)]
struct RankArgs {
    /// Model directory.
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated cell lines; all when absent.
    #[arg(long, value_delimiter = ',')]
    cell_lines: Vec<String>,
    /// Comma-separated drugs; all when absent.
    #[arg(long, value_delimiter = ',')]
    drugs: Vec<String>,
    /// Comma-separated new cell lines ranked through their neighbours in `--sim`.
    #[arg(long, value_delimiter = ',', requires = "sim")]
    new: Vec<String>,
    /// Similarity matrix covering the new and the model's cell lines.
    #[arg(long)]
    sim: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    #[arg(long, value_enum, default_value_t = RankFormat::List)]
    format: RankFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Score table (higher ranks first), e.g. from `rank --format matrix`.
    #[arg(long)]
    predictions: PathBuf,
    /// Response table (lower is more sensitive).
    #[arg(long)]
    truth: PathBuf,
    /// Label CSV.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "5,10")]
    k: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "ap,ah,ci,sci")]
    metrics: Vec<String>,
    /// Comma-separated ids of new drugs, for NT@k.
    #[arg(long, value_delimiter = ',')]
    new_drugs: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Label(a) => commands::label(a),
        Command::Split(a) => commands::split(a),
        Command::SelectGenes(a) => commands::select_genes(a),
        Command::Similarity(a) => commands::similarity(a),
        Command::Train(a) => commands::train(a),
        Command::Rank(a) => commands::rank(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Grid(a) => experiment::grid(a),
        Command::Run(a) => experiment::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
