use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{LatentModel, LossWeights, OptimizerConfig};
use crate::data::fmt_f64;
use crate::error::{Error, Result};

/// Sidecar describing how a model was trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub latent_dim: usize,
    pub weights: LossWeights,
    pub optimizer: OptimizerConfig,
    pub theta: f64,
    pub similarity: Option<String>,
    pub converged: bool,
    pub epochs: usize,
    pub final_loss: f64,
    pub trace: Vec<f64>,
}

pub const U_FILE: &str = "U.csv";
pub const V_FILE: &str = "V.csv";
pub const META_FILE: &str = "model.json";

fn write_factors<W: Write>(writer: W, label: &str, ids: &[String], factors: &Array2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![label.to_owned()];
    header.extend((0..factors.nrows()).map(|k| format!("f{k}")));
    w.write_record(&header)?;
    for (c, id) in ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(factors.column(c).iter().map(|&x| fmt_f64(x)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Reads an `id,f0,..` table back into an `l × count` matrix.
fn read_factors<R: Read>(reader: R) -> Result<(Vec<String>, Array2<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let l = rdr.headers()?.len().saturating_sub(1);
    let mut ids = Vec::new();
    let mut cols: Vec<f64> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        ids.push(rec.get(0).unwrap_or_default().to_owned());
        for (c, field) in rec.iter().skip(1).enumerate() {
            cols.push(field.parse().map_err(|_| Error::Parse {
                row: r + 2,
                column: c + 2,
                value: field.to_owned(),
            })?);
        }
    }
    let t = Array2::from_shape_vec((ids.len(), l), cols).map_err(|e| Error::Shape(e.to_string()))?;
    Ok((ids, t.reversed_axes().as_standard_layout().into_owned()))
}

impl LatentModel {
    /// Writes `U.csv`, `V.csv` (one row per cell line / drug) and, when
    /// given, the `model.json` sidecar into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, meta: Option<&ModelMetadata>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let create = |name: &str| {
            let p = dir.join(name);
            File::create(&p).map_err(|e| Error::io(p, e))
        };
        write_factors(create(U_FILE)?, "cell_line", &self.cell_line_ids, &self.u)?;
        write_factors(create(V_FILE)?, "drug", &self.drug_ids, &self.v)?;
        if let Some(meta) = meta {
            let mut f = create(META_FILE)?;
            serde_json::to_writer_pretty(&mut f, meta)?;
            f.write_all(b"\n").map_err(|e| Error::io(dir.join(META_FILE), e))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<(Self, Option<ModelMetadata>)> {
        let dir = dir.as_ref();
        let open = |name: &str| {
            let p = dir.join(name);
            File::open(&p).map_err(|e| Error::io(p, e))
        };
        let (cells, u) = read_factors(open(U_FILE)?)?;
        let (drugs, v) = read_factors(open(V_FILE)?)?;
        let meta_path = dir.join(META_FILE);
        let meta = if meta_path.exists() {
            Some(serde_json::from_reader(open(META_FILE)?)?)
        } else {
            None
        };
        Ok((Self::new(u, v, cells, drugs)?, meta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = LatentModel::new(
            arr2(&[[0.1, -2.5e-9], [3.0, 1.0 / 3.0]]),
            arr2(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]),
            vec!["a".into(), "b".into()],
            vec!["x".into(), "y".into(), "z".into()],
        )
        .unwrap();
        let meta = ModelMetadata {
            latent_dim: 2,
            weights: LossWeights::default(),
            optimizer: OptimizerConfig::default(),
            theta: 5.0,
            similarity: Some("rbf".into()),
            converged: true,
            epochs: 3,
            final_loss: 0.25,
            trace: vec![1.0, 0.5, 0.25],
        };
        m.save(dir.path(), Some(&meta)).unwrap();
        let (back, meta_back) = LatentModel::load(dir.path()).unwrap();
        assert_eq!(back, m);
        assert_eq!(meta_back.unwrap(), meta);
    }
}
