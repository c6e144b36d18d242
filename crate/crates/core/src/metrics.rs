//! Ranking quality measures for one cell line at a time, plus aggregation
//! across cell lines and the drug-pair latent analyses.
//!
//! Conventions: truth values are responses (lower = more sensitive);
//! predictions are scores (higher = ranked higher). Ranked inputs list drug
//! positions from the top.

use std::collections::HashSet;

use crate::data::ResponseMatrix;
use crate::error::{invalid, Result};
use crate::labeling::SensitivityLabels;

/// Fraction of ground-truth ordered pairs (`truth_i < truth_j`) that the
/// prediction orders strictly (`pred_i > pred_j`). Tied truths are not
/// pairs; tied predictions count as wrong. `None` when there are no pairs.
pub fn concordance_index(truth: &[f64], predicted: &[f64]) -> Option<f64> {
    assert_eq!(truth.len(), predicted.len(), "truth and prediction lengths differ");
    let n = truth.len();
    let (mut pairs, mut correct) = (0u64, 0u64);
    for i in 0..n {
        for j in 0..n {
            if truth[i] < truth[j] {
                pairs += 1;
                if predicted[i] > predicted[j] {
                    correct += 1;
                }
            }
        }
    }
    (pairs > 0).then(|| correct as f64 / pairs as f64)
}

/// Concordance index over the drugs flagged sensitive; `None` with fewer
/// than two of them.
pub fn sensitive_ci(truth: &[f64], predicted: &[f64], sensitive: &[bool]) -> Option<f64> {
    let idx: Vec<usize> = (0..truth.len()).filter(|&i| sensitive[i]).collect();
    if idx.len() < 2 {
        return None;
    }
    let t: Vec<f64> = idx.iter().map(|&i| truth[i]).collect();
    let p: Vec<f64> = idx.iter().map(|&i| predicted[i]).collect();
    concordance_index(&t, &p)
}

/// Share of sensitive drugs among the top `j` of a ranked label list.
pub fn precision_at(ranked_sensitive: &[bool], j: usize) -> f64 {
    assert!(j >= 1 && j <= ranked_sensitive.len(), "precision cutoff out of range");
    ranked_sensitive[..j].iter().filter(|&&s| s).count() as f64 / j as f64
}

/// Mean of precision@j over the positions `j ≤ k` holding sensitive drugs;
/// zero when the top `k` holds none. Lists shorter than `k` are used whole.
pub fn ap_at_k(ranked_sensitive: &[bool], k: usize) -> f64 {
    let k = k.min(ranked_sensitive.len());
    let (mut hits, mut sum) = (0usize, 0.0);
    for (pos, &s) in ranked_sensitive[..k].iter().enumerate() {
        if s {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

/// Number of sensitive drugs in the top `k`.
pub fn ah_at_k(ranked_sensitive: &[bool], k: usize) -> f64 {
    ranked_sensitive.iter().take(k).filter(|&&s| s).count() as f64
}

/// Ground-truth order: ascending response, ties by ascending id.
pub fn truth_order(ids: &[String], truth: &[f64], subset: &[usize]) -> Vec<usize> {
    let mut order = subset.to_vec();
    order.sort_by(|&a, &b| truth[a].total_cmp(&truth[b]).then_with(|| ids[a].cmp(&ids[b])));
    order
}

/// Overlap between the predicted and true top-`k` sets, over `k`.
/// Both orders must cover the same drugs.
pub fn at_k(predicted_order: &[usize], truth_order: &[usize], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    if predicted_order.len() < k || truth_order.len() < k {
        return Err(invalid(format!(
            "AT@{k} needs at least {k} drugs, got {}",
            predicted_order.len().min(truth_order.len())
        )));
    }
    let pred: HashSet<usize> = predicted_order[..k].iter().copied().collect();
    let hits = truth_order[..k].iter().filter(|i| pred.contains(i)).count();
    Ok(hits as f64 / k as f64)
}

/// Among new drugs in the true top `k`, the share also in the predicted
/// top `k`. `None` when no new drug is in the true top `k`.
pub fn nt_k(predicted_order: &[usize], truth_order: &[usize], is_new: &[bool], k: usize) -> Option<f64> {
    let kp = k.min(predicted_order.len());
    let kt = k.min(truth_order.len());
    let pred: HashSet<usize> = predicted_order[..kp].iter().copied().collect();
    let new_top: Vec<usize> = truth_order[..kt].iter().copied().filter(|&i| is_new[i]).collect();
    if new_top.is_empty() {
        return None;
    }
    let hits = new_top.iter().filter(|i| pred.contains(i)).count();
    Some(hits as f64 / new_top.len() as f64)
}

/// Mean of the defined values, with defined/excluded counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: Option<f64>,
    pub n_defined: usize,
    pub n_excluded: usize,
}

pub fn summarize(values: &[Option<f64>]) -> Summary {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    Summary {
        mean: (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64),
        n_defined: defined.len(),
        n_excluded: values.len() - defined.len(),
    }
}

/// Percentile rank of every observed drug in cell line `p`, with the most
/// sensitive drug at 100 and the least at `100/N`. Ties share the average.
fn percentile_ranks(resp: &ResponseMatrix, p: usize) -> Vec<Option<f64>> {
    let obs: Vec<(usize, f64)> = resp.row_observed(p).collect();
    let n = obs.len() as f64;
    let vals: Vec<f64> = obs.iter().map(|&(_, v)| v).collect();
    let ranks = crate::similarity::average_ranks(&vals);
    let mut out = vec![None; resp.n_drugs()];
    for ((i, _), r) in obs.iter().zip(ranks) {
        out[*i] = Some(100.0 * (n - r + 1.0) / n);
    }
    out
}

/// Mean absolute percentile-rank difference of each drug pair over the cell
/// lines where both drugs are observed, in percentage points.
pub fn delta_rank_pct(resp: &ResponseMatrix, drug_pairs: &[(usize, usize)]) -> Vec<Option<f64>> {
    let per_cell: Vec<Vec<Option<f64>>> = (0..resp.n_cell_lines()).map(|p| percentile_ranks(resp, p)).collect();
    drug_pairs
        .iter()
        .map(|&(a, b)| {
            let diffs: Vec<f64> = per_cell.iter().filter_map(|r| Some((r[a]? - r[b]?).abs())).collect();
            (!diffs.is_empty()).then(|| diffs.iter().sum::<f64>() / diffs.len() as f64)
        })
        .collect()
}

/// Absolute difference between two drugs' sensitive fractions, each taken
/// over the cell lines where the drug has a known label.
pub fn delta_eff_pct(labels: &SensitivityLabels, drug_pairs: &[(usize, usize)]) -> Vec<Option<f64>> {
    let table = labels.labels();
    let frac: Vec<Option<f64>> = table
        .columns()
        .into_iter()
        .map(|col| {
            let known = col.iter().filter(|l| **l != crate::labeling::Label::Unknown).count();
            let sens = col.iter().filter(|l| l.is_sensitive()).count();
            (known > 0).then(|| sens as f64 / known as f64)
        })
        .collect();
    drug_pairs
        .iter()
        .map(|&(a, b)| Some((frac[a]? - frac[b]?).abs()))
        .collect()
}

/// Fold-averaged AP@k and AH@k of uniformly random rankings, one value per
/// permutation round.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomBaseline {
    pub ap: Vec<f64>,
    pub ah: Vec<f64>,
}

/// Shuffles every test list independently `n_perm` times. `folds[f][c]`
/// holds the sensitivity labels of one cell line's test drugs; lists
/// without a sensitive drug are skipped, as in the real evaluation. Each
/// round averages over cell lines within a fold, then over folds.
pub fn random_ranking_baseline(folds: &[Vec<Vec<bool>>], k: usize, n_perm: usize, seed: u64) -> RandomBaseline {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = RandomBaseline {
        ap: Vec::with_capacity(n_perm),
        ah: Vec::with_capacity(n_perm),
    };
    for _ in 0..n_perm {
        let (mut ap_folds, mut ah_folds) = (Vec::new(), Vec::new());
        for fold in folds {
            let (mut ap, mut ah, mut count) = (0.0, 0.0, 0usize);
            for labels in fold.iter().filter(|l| l.iter().any(|&s| s)) {
                let mut shuffled = labels.clone();
                shuffled.shuffle(&mut rng);
                ap += ap_at_k(&shuffled, k);
                ah += ah_at_k(&shuffled, k);
                count += 1;
            }
            if count > 0 {
                ap_folds.push(ap / count as f64);
                ah_folds.push(ah / count as f64);
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        out.ap.push(mean(&ap_folds));
        out.ah.push(mean(&ah_folds));
    }
    out
}
