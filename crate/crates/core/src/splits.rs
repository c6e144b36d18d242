//! Experimental splits: per-cell-line k-fold cross validation and the
//! new-cell-line hold-out.

use std::io::Write;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::ResponseMatrix;
use crate::error::{invalid, Error, Result};
use crate::labeling::interpolated_percentile;
use crate::similarity::SimilarityMatrix;

/// Fold membership of one response entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldSlot {
    Unobserved,
    Fold(usize),
    /// Kept in training for every fold.
    Pinned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldSplit {
    pub fold_count: usize,
    pub assignment: Array2<FoldSlot>,
    pub seed: u64,
    /// `(cell line, drug)` ids of entries pinned to training.
    pub pinned: Vec<(String, String)>,
}

impl FoldSplit {
    /// Mask of entries held out in `fold`.
    pub fn test_mask(&self, fold: usize) -> Array2<bool> {
        self.assignment.mapv(|s| s == FoldSlot::Fold(fold))
    }

    /// Mask of observed entries used for training when `fold` is held out.
    pub fn train_mask(&self, fold: usize) -> Array2<bool> {
        self.assignment
            .mapv(|s| matches!(s, FoldSlot::Pinned) || matches!(s, FoldSlot::Fold(f) if f != fold))
    }

    /// `(train, test)` partitions for one fold. The training side satisfies
    /// the coverage invariant; the test side need not.
    pub fn partition(&self, resp: &ResponseMatrix, fold: usize) -> Result<(ResponseMatrix, ResponseMatrix)> {
        let train = resp.masked(&self.train_mask(fold))?;
        let train = ResponseMatrix::new(
            train.cell_line_ids().to_vec(),
            train.drug_ids().to_vec(),
            train.values().clone(),
            train.observed().clone(),
        )?;
        let test = resp.masked(&self.test_mask(fold))?;
        Ok((train, test))
    }

    /// Cell-line × drug CSV: fold index, `pinned`, or empty for unobserved.
    pub fn write_csv<W: Write>(&self, resp: &ResponseMatrix, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["cell_line".to_owned()];
        header.extend(resp.drug_ids().iter().cloned());
        w.write_record(&header)?;
        for (p, id) in resp.cell_line_ids().iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.assignment.row(p).iter().map(|s| match s {
                FoldSlot::Unobserved => String::new(),
                FoldSlot::Fold(f) => f.to_string(),
                FoldSlot::Pinned => "pinned".to_owned(),
            }));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Randomly partitions each cell line's observed entries into `k` folds.
///
/// Drugs observed in a single cell line, and cell lines with a single
/// observation, are pinned to training. Remaining trainability violations
/// (a drug whose every entry lands in one fold) are repaired by swapping
/// fold labels within a cell line, which keeps per-cell-line fold sizes.
pub fn kfold_split(resp: &ResponseMatrix, k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 2 {
        return Err(invalid(format!("fold count must be >= 2, got {k}")));
    }
    let (m, n) = (resp.n_cell_lines(), resp.n_drugs());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = Array2::from_elem((m, n), FoldSlot::Unobserved);
    let mut pinned = Vec::new();

    let drug_counts: Vec<usize> = (0..n)
        .map(|i| (0..m).filter(|&p| resp.is_observed(p, i)).count())
        .collect();

    for p in 0..m {
        let observed: Vec<usize> = resp.row_observed(p).map(|(i, _)| i).collect();
        let mut free = Vec::with_capacity(observed.len());
        for &i in &observed {
            if drug_counts[i] <= 1 || observed.len() <= 1 {
                assignment[[p, i]] = FoldSlot::Pinned;
                pinned.push((resp.cell_line_ids()[p].clone(), resp.drug_ids()[i].clone()));
            } else {
                free.push(i);
            }
        }
        free.shuffle(&mut rng);
        // Random offset so fold 0 is not always the largest.
        let offset = if free.is_empty() {
            0
        } else {
            rand::Rng::random_range(&mut rng, 0..k)
        };
        for (pos, &i) in free.iter().enumerate() {
            assignment[[p, i]] = FoldSlot::Fold((pos + offset) % k);
        }
    }

    repair_trainability(&mut assignment, k, resp, &mut pinned);

    for (c, d) in &pinned {
        log::warn!("pinned ({c}, {d}) to training in every fold");
    }
    Ok(FoldSplit {
        fold_count: k,
        assignment,
        seed,
        pinned,
    })
}

/// True when every entry of drug `i` sits in fold `f`.
fn untrainable(assignment: &Array2<FoldSlot>, i: usize, f: usize) -> bool {
    let mut any = false;
    for s in assignment.column(i) {
        match *s {
            FoldSlot::Unobserved => {}
            FoldSlot::Fold(g) if g == f => any = true,
            _ => return false,
        }
    }
    any
}

fn repair_trainability(
    assignment: &mut Array2<FoldSlot>,
    k: usize,
    resp: &ResponseMatrix,
    pinned: &mut Vec<(String, String)>,
) {
    let (m, n) = assignment.dim();
    for i in 0..n {
        for f in 0..k {
            if !untrainable(assignment, i, f) {
                continue;
            }
            // Swap (p, i) out of fold f with some (p, j) from another fold,
            // provided drug j keeps an entry outside fold f afterwards.
            let mut fixed = false;
            'outer: for p in 0..m {
                if assignment[[p, i]] != FoldSlot::Fold(f) {
                    continue;
                }
                for j in 0..n {
                    let FoldSlot::Fold(g) = assignment[[p, j]] else {
                        continue;
                    };
                    if g == f || j == i {
                        continue;
                    }
                    assignment[[p, i]] = FoldSlot::Fold(g);
                    assignment[[p, j]] = FoldSlot::Fold(f);
                    if !untrainable(assignment, j, f) && !untrainable(assignment, i, g) {
                        fixed = true;
                        break 'outer;
                    }
                    assignment[[p, i]] = FoldSlot::Fold(f);
                    assignment[[p, j]] = FoldSlot::Fold(g);
                }
            }
            if !fixed {
                let p = (0..m)
                    .find(|&p| assignment[[p, i]] == FoldSlot::Fold(f))
                    .expect("untrainable drug has an entry in the fold");
                assignment[[p, i]] = FoldSlot::Pinned;
                pinned.push((resp.cell_line_ids()[p].clone(), resp.drug_ids()[i].clone()));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutSplit {
    /// Held-out cell lines in selection order.
    pub test_cell_lines: Vec<String>,
    /// Training cell lines in original matrix order.
    pub train_cell_lines: Vec<String>,
    /// Training cell lines reserved as nearest neighbours of test cell lines.
    pub protected: Vec<String>,
    pub similarity_threshold: f64,
    pub seed: u64,
}

impl HoldoutSplit {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["cell_line", "role"])?;
        for id in &self.test_cell_lines {
            w.write_record([id.as_str(), "test"])?;
        }
        for id in &self.train_cell_lines {
            let role = if self.protected.contains(id) {
                "protected"
            } else {
                "train"
            };
            w.write_record([id.as_str(), role])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// The 90th percentile of off-diagonal similarities, the default hold-out
/// threshold.
pub fn default_similarity_threshold(sim: &SimilarityMatrix, pct: f64) -> Result<f64> {
    let m = sim.len();
    let mut vals: Vec<f64> = (0..m)
        .flat_map(|p| (p + 1..m).map(move |q| (p, q)))
        .filter_map(|(p, q)| sim.get(p, q))
        .collect();
    if vals.is_empty() {
        return Err(Error::Empty("no off-diagonal similarities".into()));
    }
    if !(0.0..=100.0).contains(&pct) {
        return Err(invalid(format!("percentile must lie in [0, 100], got {pct}")));
    }
    vals.sort_by(f64::total_cmp);
    Ok(interpolated_percentile(&vals, pct))
}

/// Greedy selection of `n_new` test cell lines that each keep a similar
/// training cell line.
///
/// Each round counts, for every remaining candidate, the other candidates
/// whose similarity exceeds `sim_threshold`; the candidate with the largest
/// count (ties: smallest id) becomes a test cell line, its most similar
/// candidate (ties: smallest id) is protected as training, and both leave
/// the pool.
pub fn holdout_split(
    resp: &ResponseMatrix,
    sim: &SimilarityMatrix,
    n_new: usize,
    sim_threshold: f64,
    seed: u64,
) -> Result<HoldoutSplit> {
    let m = resp.n_cell_lines();
    if n_new == 0 || n_new >= m {
        return Err(invalid(format!("n_new must be in 1..{m}, got {n_new}")));
    }
    let sim = sim.restrict(resp.cell_line_ids())?;
    let ids = resp.cell_line_ids();
    let mut pool: Vec<usize> = (0..m).collect();
    let mut test = Vec::with_capacity(n_new);
    let mut protected = Vec::with_capacity(n_new);

    while test.len() < n_new {
        let similar = |a: usize, b: usize| a != b && sim.get(a, b).is_some_and(|s| s > sim_threshold);
        let best = pool
            .iter()
            .map(|&c| (c, pool.iter().filter(|&&d| similar(c, d)).count()))
            .filter(|&(_, count)| count > 0)
            .max_by(|a, b| a.1.cmp(&b.1).then_with(|| ids[b.0].cmp(&ids[a.0])));
        let Some((chosen, _)) = best else {
            return Err(Error::PoolExhausted {
                selected: test.len(),
                requested: n_new,
            });
        };
        let partner = pool
            .iter()
            .copied()
            .filter(|&d| similar(chosen, d))
            .max_by(|&a, &b| {
                let (sa, sb) = (sim.get(chosen, a).unwrap(), sim.get(chosen, b).unwrap());
                sa.total_cmp(&sb).then_with(|| ids[b].cmp(&ids[a]))
            })
            .expect("chosen candidate has a similar neighbour");
        test.push(chosen);
        protected.push(partner);
        pool.retain(|&c| c != chosen && c != partner);
    }

    let train: Vec<String> = (0..m).filter(|p| !test.contains(p)).map(|p| ids[p].clone()).collect();
    Ok(HoldoutSplit {
        test_cell_lines: test.iter().map(|&p| ids[p].clone()).collect(),
        train_cell_lines: train,
        protected: protected.iter().map(|&p| ids[p].clone()).collect(),
        similarity_threshold: sim_threshold,
        seed,
    })
}
