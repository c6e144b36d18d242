use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, GridPoint};
use super::protocol::{grid_search, ExperimentResult};
use crate::data::fmt_f64;
use crate::error::{Error, Result, Stage};

pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_TXT: &str = "summary.txt";
pub const FOLDS_CSV: &str = "fold_reports.csv";
pub const CELL_LINES_CSV: &str = "per_cell_line.csv";
pub const BEST_CSV: &str = "best.csv";
pub const HOLDOUT_CSV: &str = "holdout_split.csv";
pub const CONFIG_TOML: &str = "config.toml";

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn point_fields(p: &GridPoint) -> [String; 4] {
    [
        p.latent_dim.to_string(),
        fmt_f64(p.alpha),
        fmt_f64(p.beta),
        fmt_f64(p.gamma),
    ]
}

fn csv_file(dir: &Path, name: &str) -> Result<csv::Writer<File>> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn finish(mut w: csv::Writer<File>, dir: &Path, name: &str) -> Result<()> {
    w.flush().map_err(|e| Error::io(dir.join(name), e))
}

fn write_summary(dir: &Path, r: &ExperimentResult) -> Result<()> {
    let mut w = csv_file(dir, SUMMARY_CSV)?;
    let mut header: Vec<String> = ["protocol", "seed", "theta", "latent_dim", "alpha", "beta", "gamma"]
        .map(String::from)
        .to_vec();
    header.extend(r.metrics.iter().map(|m| m.to_string()));
    header.extend(r.metrics.iter().map(|m| format!("{m}_excluded")));
    w.write_record(&header)?;
    for pr in &r.points {
        let mut rec = vec![r.protocol.to_string(), r.seed.to_string(), fmt_f64(r.theta)];
        rec.extend(point_fields(&pr.point));
        rec.extend(pr.means.iter().map(|&v| opt(v)));
        rec.extend(pr.excluded.iter().map(usize::to_string));
        w.write_record(&rec)?;
    }
    finish(w, dir, SUMMARY_CSV)
}

fn write_folds(dir: &Path, r: &ExperimentResult) -> Result<()> {
    let mut w = csv_file(dir, FOLDS_CSV)?;
    let mut header: Vec<String> = [
        "protocol",
        "seed",
        "latent_dim",
        "alpha",
        "beta",
        "gamma",
        "fold",
        "epochs",
        "converged",
        "final_loss",
    ]
    .map(String::from)
    .to_vec();
    for m in &r.metrics {
        header.extend([m.to_string(), format!("{m}_n"), format!("{m}_excluded")]);
    }
    w.write_record(&header)?;
    for pr in &r.points {
        for f in &pr.folds {
            let mut rec = vec![r.protocol.to_string(), r.seed.to_string()];
            rec.extend(point_fields(&pr.point));
            rec.extend([
                f.fold.to_string(),
                f.epochs.to_string(),
                f.converged.to_string(),
                fmt_f64(f.final_loss),
            ]);
            for s in &f.summaries {
                rec.extend([opt(s.mean), s.n_defined.to_string(), s.n_excluded.to_string()]);
            }
            w.write_record(&rec)?;
        }
    }
    finish(w, dir, FOLDS_CSV)
}

fn write_cell_lines(dir: &Path, r: &ExperimentResult) -> Result<()> {
    let mut w = csv_file(dir, CELL_LINES_CSV)?;
    let mut header: Vec<String> = [
        "protocol",
        "seed",
        "latent_dim",
        "alpha",
        "beta",
        "gamma",
        "fold",
        "cell_line",
        "n_test",
        "n_sensitive",
    ]
    .map(String::from)
    .to_vec();
    header.extend(r.metrics.iter().map(|m| m.to_string()));
    w.write_record(&header)?;
    for pr in &r.points {
        for c in &pr.cell_lines {
            let mut rec = vec![r.protocol.to_string(), r.seed.to_string()];
            rec.extend(point_fields(&pr.point));
            rec.extend([
                c.fold.to_string(),
                c.cell_line.clone(),
                c.n_test.to_string(),
                c.n_sensitive.to_string(),
            ]);
            rec.extend(c.values.iter().map(|&v| opt(v)));
            w.write_record(&rec)?;
        }
    }
    finish(w, dir, CELL_LINES_CSV)
}

fn write_best(dir: &Path, r: &ExperimentResult) -> Result<()> {
    let mut w = csv_file(dir, BEST_CSV)?;
    w.write_record(["metric", "value", "latent_dim", "alpha", "beta", "gamma", "seed"])?;
    for b in grid_search(r) {
        let mut rec = vec![b.metric.to_string(), fmt_f64(b.value)];
        rec.extend(point_fields(&b.point));
        rec.push(r.seed.to_string());
        w.write_record(&rec)?;
    }
    finish(w, dir, BEST_CSV)
}

/// Aligned text rendering of the summary table and the per-metric winners.
pub fn render_summary(r: &ExperimentResult) -> String {
    let mut header: Vec<String> = ["l", "alpha", "beta", "gamma"].map(String::from).to_vec();
    header.extend(r.metrics.iter().map(|m| m.to_string()));
    let mut rows = vec![header];
    for pr in &r.points {
        let p = &pr.point;
        let mut row = vec![
            p.latent_dim.to_string(),
            p.alpha.to_string(),
            p.beta.to_string(),
            p.gamma.to_string(),
        ];
        row.extend(
            pr.means
                .iter()
                .map(|v| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())),
        );
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = format!("protocol {}  theta {}  seed {}\n\n", r.protocol, r.theta, r.seed);
    for row in &rows {
        let cells: Vec<String> = row.iter().zip(&widths).map(|(s, w)| format!("{s:>w$}")).collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    let best = grid_search(r);
    if !best.is_empty() {
        out.push_str("\nbest per metric\n");
        for b in best {
            out.push_str(&format!("{:>8}  {:.4}  {}\n", b.metric.to_string(), b.value, b.point));
        }
    }
    out
}

/// Writes every report file into `dir` and returns their paths.
pub fn write_reports(dir: impl AsRef<Path>, cfg: &ExperimentConfig, r: &ExperimentResult) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let go = || -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_summary(dir, r)?;
        write_folds(dir, r)?;
        write_cell_lines(dir, r)?;
        write_best(dir, r)?;
        let mut names = vec![
            SUMMARY_CSV,
            FOLDS_CSV,
            CELL_LINES_CSV,
            BEST_CSV,
            SUMMARY_TXT,
            CONFIG_TOML,
        ];
        let txt = dir.join(SUMMARY_TXT);
        std::fs::write(&txt, render_summary(r)).map_err(|e| Error::io(txt, e))?;
        let toml_path = dir.join(CONFIG_TOML);
        let mut f = File::create(&toml_path).map_err(|e| Error::io(&toml_path, e))?;
        f.write_all(cfg.to_toml_string()?.as_bytes())
            .map_err(|e| Error::io(&toml_path, e))?;
        if let Some(split) = &r.holdout {
            let path = dir.join(HOLDOUT_CSV);
            split.write_csv(File::create(&path).map_err(|e| Error::io(&path, e))?)?;
            names.push(HOLDOUT_CSV);
        }
        Ok(names.into_iter().map(|n| dir.join(n)).collect())
    };
    go().map_err(|e| e.at_stage(Stage::Report, None))
}
