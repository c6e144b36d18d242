//! End-to-end experiments: data sources, the k-fold, transductive and
//! hold-out protocols, grid search and report files.

mod config;
mod protocol;
mod report;
mod synthetic;

use std::path::PathBuf;

use crate::error::Result;

pub use config::{ExperimentConfig, Grid, GridPoint, HoldoutConfig, Protocol};
pub use protocol::{
    derive_seed, grid_search, protocol_metrics, run_protocol, BestPoint, CellLineResult, Dataset, ExperimentResult,
    FoldResult, Metric, PointResult, ProtocolRun,
};
pub use report::{
    render_summary, write_reports, BEST_CSV, CELL_LINES_CSV, CONFIG_TOML, FOLDS_CSV, HOLDOUT_CSV, SUMMARY_CSV,
    SUMMARY_TXT,
};
pub use synthetic::{generate_synthetic, SyntheticConfig, SyntheticData};

/// Loads data, runs the protocol and writes reports to `cfg.output`.
/// Results of completed grid points are written even when another grid
/// point fails; the failure is then returned.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(ExperimentResult, Vec<PathBuf>)> {
    cfg.validate()?;
    let data = Dataset::from_config(cfg)?;
    let run = run_protocol(cfg, &data)?;
    let files = write_reports(&cfg.output, cfg, &run.result)?;
    match run.error {
        Some(e) => Err(e),
        None => Ok((run.result, files)),
    }
}
