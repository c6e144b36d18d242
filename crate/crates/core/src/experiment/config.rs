use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::synthetic::SyntheticConfig;
use crate::error::{invalid, Error, Result};
use crate::genes::PathConfig;
use crate::model::{LossWeights, OptimizerConfig};
use crate::similarity::SimilarityKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Per-cell-line k-fold; test drugs ranked among themselves.
    Kfold,
    /// As `Kfold`, plus test drugs ranked together with training drugs.
    Transductive,
    /// Whole cell lines held out and ranked through expression neighbours.
    Holdout,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Kfold => "kfold",
            Protocol::Transductive => "transductive",
            Protocol::Holdout => "holdout",
        })
    }
}

/// One hyperparameter combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub latent_dim: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl GridPoint {
    pub fn weights(&self) -> LossWeights {
        LossWeights {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
        }
    }

    /// Lexicographic order on `(l, alpha, beta, gamma)`.
    pub fn cmp_tuple(&self, other: &Self) -> std::cmp::Ordering {
        self.latent_dim
            .cmp(&other.latent_dim)
            .then(self.alpha.total_cmp(&other.alpha))
            .then(self.beta.total_cmp(&other.beta))
            .then(self.gamma.total_cmp(&other.gamma))
    }
}

impl fmt::Display for GridPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "l={} alpha={} beta={} gamma={}",
            self.latent_dim, self.alpha, self.beta, self.gamma
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub latent_dim: Vec<usize>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            latent_dim: vec![5, 10, 15, 30, 50],
            alpha: vec![0.0, 0.1, 0.5, 0.9, 1.0],
            beta: vec![0.1, 1.0],
            gamma: vec![0.0, 1.0, 100.0],
        }
    }
}

impl Grid {
    pub fn single(p: GridPoint) -> Self {
        Self {
            latent_dim: vec![p.latent_dim],
            alpha: vec![p.alpha],
            beta: vec![p.beta],
            gamma: vec![p.gamma],
        }
    }

    /// Every combination, sorted lexicographically with duplicates removed.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut pts = Vec::new();
        for &latent_dim in &self.latent_dim {
            for &alpha in &self.alpha {
                for &beta in &self.beta {
                    for &gamma in &self.gamma {
                        pts.push(GridPoint {
                            latent_dim,
                            alpha,
                            beta,
                            gamma,
                        });
                    }
                }
            }
        }
        pts.sort_by(GridPoint::cmp_tuple);
        pts.dedup_by(|a, b| a.cmp_tuple(b).is_eq());
        pts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoldoutConfig {
    pub n_new: usize,
    /// Explicit split threshold; when absent the percentile below is used.
    pub similarity_threshold: Option<f64>,
    pub threshold_percentile: f64,
    /// Training neighbours averaged into a new cell line's vector.
    pub top_k: usize,
}

impl Default for HoldoutConfig {
    fn default() -> Self {
        Self {
            n_new: 4,
            similarity_threshold: None,
            threshold_percentile: 90.0,
            top_k: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub response: Option<PathBuf>,
    pub expression: Option<PathBuf>,
    /// Generated data used when no response file is given.
    pub synthetic: Option<SyntheticConfig>,
    pub theta: f64,
    pub protocol: Protocol,
    pub folds: usize,
    pub ks: Vec<usize>,
    pub grid: Grid,
    /// `optimizer.seed` is replaced per fold by a seed derived from `seed`.
    pub optimizer: OptimizerConfig,
    pub genes: PathConfig,
    /// Build similarities on elastic-net selected genes rather than all genes.
    pub select_genes: bool,
    pub similarity: SimilarityKind,
    /// RBF bandwidth; the median heuristic when absent.
    pub similarity_gamma: Option<f64>,
    pub holdout: HoldoutConfig,
    pub seed: u64,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            response: None,
            expression: None,
            synthetic: None,
            theta: 5.0,
            protocol: Protocol::Kfold,
            folds: 5,
            ks: vec![5, 10],
            grid: Grid::default(),
            optimizer: OptimizerConfig::default(),
            genes: PathConfig::default(),
            select_genes: true,
            similarity: SimilarityKind::Rbf,
            similarity_gamma: None,
            holdout: HoldoutConfig::default(),
            seed: 0,
            output: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        // Relative data paths are taken relative to the config file.
        if let Some(dir) = path.parent() {
            for p in [&mut cfg.response, &mut cfg.expression].into_iter().flatten() {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn has_expression(&self) -> bool {
        self.expression.is_some() || (self.response.is_none() && self.synthetic.is_some())
    }

    pub fn validate(&self) -> Result<()> {
        if self.response.is_none() && self.synthetic.is_none() {
            return Err(Error::Config("either `response` or `synthetic` must be set".into()));
        }
        if !(self.theta > 0.0 && self.theta < 100.0) {
            return Err(Error::Config(format!("theta must lie in (0, 100), got {}", self.theta)));
        }
        let points = self.grid.points();
        if points.is_empty() {
            return Err(Error::Config("the grid is empty".into()));
        }
        for p in &points {
            if p.latent_dim == 0 {
                return Err(Error::Config("latent dimensions must be at least 1".into()));
            }
            p.weights().validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::Config("ks must be a non-empty list of positive integers".into()));
        }
        self.optimizer.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.genes.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.similarity_gamma.is_some_and(|g| !(g > 0.0)) {
            return Err(Error::Config("similarity_gamma must be positive".into()));
        }
        if !matches!(self.similarity, SimilarityKind::Cosine | SimilarityKind::Rbf) {
            return Err(invalid("experiment similarities must be `cosine` or `rbf`"));
        }
        match self.protocol {
            Protocol::Kfold | Protocol::Transductive => {
                if self.folds < 2 {
                    return Err(Error::Config("folds must be at least 2".into()));
                }
                if points.iter().any(|p| p.gamma != 0.0) && !self.has_expression() {
                    return Err(Error::Config("gamma > 0 needs an expression matrix".into()));
                }
            }
            Protocol::Holdout => {
                if !self.has_expression() {
                    return Err(Error::Config("the holdout protocol needs an expression matrix".into()));
                }
                if self.holdout.top_k == 0 || self.holdout.n_new == 0 {
                    return Err(Error::Config("holdout n_new and top_k must be at least 1".into()));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_covers_the_explored_ranges() {
        let pts = Grid::default().points();
        assert_eq!(pts.len(), 5 * 5 * 2 * 3);
        assert!(pts.windows(2).all(|w| w[0].cmp_tuple(&w[1]).is_lt()));
        assert!(pts.contains(&GridPoint {
            latent_dim: 10,
            alpha: 0.0,
            beta: 0.1,
            gamma: 100.0
        }));
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let cfg = ExperimentConfig {
            synthetic: Some(SyntheticConfig::default()),
            ..Default::default()
        };
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);

        let partial = ExperimentConfig::from_toml_str(
            "protocol = \"holdout\"\ntheta = 10.0\n[synthetic]\nseed = 4\n[grid]\nalpha = [0.0]\n",
        )
        .unwrap();
        assert_eq!(partial.protocol, Protocol::Holdout);
        assert_eq!(partial.grid.alpha, vec![0.0]);
        assert_eq!(partial.grid.beta, vec![0.1, 1.0]);
        assert_eq!(partial.synthetic.unwrap().seed, 4);
        assert!(ExperimentConfig::from_toml_str("thta = 3").is_err());
    }

    #[test]
    fn validation() {
        assert!(ExperimentConfig::default().validate().is_err());
        let ok = ExperimentConfig {
            synthetic: Some(SyntheticConfig::default()),
            ..Default::default()
        };
        ok.validate().unwrap();
        let mut bad = ok.clone();
        bad.grid.alpha.clear();
        assert!(bad.validate().is_err());
        let no_expr = ExperimentConfig {
            response: Some("r.csv".into()),
            ..ok.clone()
        };
        assert!(no_expr.validate().is_err());
        let no_gamma = ExperimentConfig {
            grid: Grid {
                gamma: vec![0.0],
                ..Grid::default()
            },
            ..no_expr.clone()
        };
        no_gamma.validate().unwrap();
        let holdout = ExperimentConfig {
            protocol: Protocol::Holdout,
            ..no_gamma
        };
        assert!(holdout.validate().is_err());
    }
}
