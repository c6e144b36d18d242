use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{ExpressionMatrix, ResponseMatrix};
use crate::error::{invalid, Error, Result};
use crate::model::LatentModel;

/// Mask draws tried before giving up on a missing-entry pattern.
const MAX_MASK_ATTEMPTS: usize = 100;
/// Genes per planted latent dimension.
const GENES_PER_DIM: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_cell_lines: usize,
    pub n_drugs: usize,
    pub latent_dim: usize,
    pub noise_sigma: f64,
    pub missing_frac: f64,
    /// Standard deviation of the noise added to the expression embedding.
    pub expression_noise: f64,
    /// When set, cell lines are assigned round-robin to this many clusters
    /// and every member of a cluster shares one latent vector.
    pub clusters: Option<usize>,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_cell_lines: 40,
            n_drugs: 60,
            latent_dim: 5,
            noise_sigma: 0.05,
            missing_frac: 0.2,
            expression_noise: 0.1,
            clusters: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub response: ResponseMatrix,
    pub expression: ExpressionMatrix,
    /// Generating factors; scores `u·v` are negated responses.
    pub planted: LatentModel,
    /// Cluster index per cell line when clusters were requested.
    pub clusters: Option<Vec<usize>>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Every cell line and every drug keeps at least two observations, so the
/// data loads and every drug can appear on both sides of a split.
fn mask_ok(mask: &Array2<bool>) -> bool {
    mask.rows().into_iter().all(|r| r.iter().filter(|&&o| o).count() >= 2)
        && mask
            .columns()
            .into_iter()
            .all(|c| c.iter().filter(|&&o| o).count() >= 2)
}

/// Planted low-rank responses `r = −uᵀv + noise` with an expression matrix
/// that linearly embeds each cell line's latent vector in
/// `5 · latent_dim` genes.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    let (m, n, l) = (cfg.n_cell_lines, cfg.n_drugs, cfg.latent_dim);
    if l == 0 || m < 2 || n < 2 {
        return Err(invalid(
            "synthetic data needs latent_dim >= 1 and at least 2 cell lines and drugs",
        ));
    }
    if !(0.0..0.5).contains(&cfg.missing_frac) {
        return Err(invalid(format!(
            "missing_frac must lie in [0, 0.5), got {}",
            cfg.missing_frac
        )));
    }
    if !(cfg.noise_sigma >= 0.0) || !(cfg.expression_noise >= 0.0) {
        return Err(invalid("noise levels must be non-negative"));
    }
    if cfg.clusters == Some(0) {
        return Err(invalid("clusters must be at least 1"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cluster_of = cfg.clusters.map(|c| (0..m).map(|p| p % c).collect::<Vec<_>>());
    let u = match (&cluster_of, cfg.clusters) {
        (Some(of), Some(c)) => {
            let centers = Array2::from_shape_simple_fn((l, c), || normal(&mut rng));
            Array2::from_shape_fn((l, m), |(k, p)| centers[[k, of[p]]])
        }
        _ => Array2::from_shape_simple_fn((l, m), || normal(&mut rng)),
    };
    let v = Array2::from_shape_simple_fn((l, n), || normal(&mut rng));

    let clean = u.t().dot(&v);
    let values = Array2::from_shape_fn((m, n), |(p, i)| -clean[[p, i]] + cfg.noise_sigma * normal(&mut rng));

    let g = GENES_PER_DIM * l;
    let embed = Array2::from_shape_simple_fn((l, g), || normal(&mut rng));
    let mut expr = u.t().dot(&embed);
    expr.mapv_inplace(|x| x + cfg.expression_noise * normal(&mut rng));

    let mut mask = None;
    for _ in 0..MAX_MASK_ATTEMPTS {
        let candidate = Array2::from_shape_simple_fn((m, n), || !rng.random_bool(cfg.missing_frac));
        if mask_ok(&candidate) {
            mask = Some(candidate);
            break;
        }
    }
    let observed = mask.ok_or_else(|| {
        Error::InvalidArgument(format!(
            "no valid missing-entry mask in {MAX_MASK_ATTEMPTS} draws; lower missing_frac"
        ))
    })?;

    let cell_ids: Vec<String> = (0..m).map(|p| format!("CL{p:03}")).collect();
    let drug_ids: Vec<String> = (0..n).map(|i| format!("D{i:03}")).collect();
    let gene_ids: Vec<String> = (0..g).map(|j| format!("G{j:03}")).collect();
    let values = ndarray::Zip::from(&values)
        .and(&observed)
        .map_collect(|&v, &o| if o { v } else { 0.0 });
    Ok(SyntheticData {
        response: ResponseMatrix::new(cell_ids.clone(), drug_ids.clone(), values, observed)?,
        expression: ExpressionMatrix::new(cell_ids.clone(), gene_ids, expr)?,
        planted: LatentModel::new(u, v, cell_ids, drug_ids)?,
        clusters: cluster_of,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_count_near_expectation() {
        let cfg = SyntheticConfig {
            n_cell_lines: 40,
            n_drugs: 60,
            missing_frac: 0.2,
            seed: 3,
            ..Default::default()
        };
        let d = generate_synthetic(&cfg).unwrap();
        let missing = (40 * 60 - d.response.n_observed()) as f64;
        let sd = (2400.0 * 0.2 * 0.8f64).sqrt();
        assert!((missing - 480.0).abs() <= 4.0 * sd, "{missing}");
    }

    #[test]
    fn noiseless_responses_are_planted_scores() {
        let cfg = SyntheticConfig {
            noise_sigma: 0.0,
            missing_frac: 0.0,
            ..Default::default()
        };
        let d = generate_synthetic(&cfg).unwrap();
        for p in 0..40 {
            for i in 0..60 {
                assert!((d.response.get(p, i).unwrap() + d.planted.score(p, i)).abs() < 1e-12);
            }
        }
        assert_eq!(d.expression.n_genes(), 25);
    }

    #[test]
    fn fixed_seed_gives_identical_files() {
        let cfg = SyntheticConfig::default();
        let (a, b) = (generate_synthetic(&cfg).unwrap(), generate_synthetic(&cfg).unwrap());
        let bytes = |d: &SyntheticData| {
            let mut r = Vec::new();
            d.response.write_csv(&mut r).unwrap();
            d.expression.write_csv(&mut r).unwrap();
            r
        };
        assert_eq!(bytes(&a), bytes(&b));
        let c = generate_synthetic(&SyntheticConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(bytes(&a), bytes(&c));
    }

    #[test]
    fn clusters_share_latent_vectors() {
        let cfg = SyntheticConfig {
            clusters: Some(2),
            ..Default::default()
        };
        let d = generate_synthetic(&cfg).unwrap();
        let of = d.clusters.as_ref().unwrap();
        assert_eq!(of[0], of[2]);
        assert_eq!(d.planted.cell_line_vector(0), d.planted.cell_line_vector(2));
        assert_ne!(d.planted.cell_line_vector(0), d.planted.cell_line_vector(1));
    }

    #[test]
    fn rejects_bad_parameters() {
        for cfg in [
            SyntheticConfig {
                latent_dim: 0,
                ..Default::default()
            },
            SyntheticConfig {
                missing_frac: 0.5,
                ..Default::default()
            },
            SyntheticConfig {
                clusters: Some(0),
                ..Default::default()
            },
        ] {
            assert!(generate_synthetic(&cfg).is_err());
        }
    }
}
