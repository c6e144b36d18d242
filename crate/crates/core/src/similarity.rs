//! Cell-line similarity matrices and rank correlation between them.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{fmt_f64, ResponseMatrix};
use crate::error::{invalid, Axis, Error, Result};
use crate::model::LatentModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityKind {
    Cosine,
    Rbf,
    LatentRbf,
    SpearmanProfile,
}

/// Symmetric cell-line similarity table. Undefined entries (pairs sharing
/// too few drugs in a Spearman profile) are stored as NaN and read as `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    ids: Vec<String>,
    values: Array2<f64>,
    kind: SimilarityKind,
}

const SYMMETRY_TOL: f64 = 1e-12;

impl SimilarityMatrix {
    pub fn new(ids: Vec<String>, values: Array2<f64>, kind: SimilarityKind) -> Result<Self> {
        let m = ids.len();
        if values.dim() != (m, m) {
            return Err(Error::Shape(format!(
                "similarity must be {m}x{m}, got {:?}",
                values.dim()
            )));
        }
        for p in 0..m {
            for q in p + 1..m {
                let (a, b) = (values[[p, q]], values[[q, p]]);
                let both_nan = a.is_nan() && b.is_nan();
                if !both_nan && !((a - b).abs() <= SYMMETRY_TOL) {
                    return Err(invalid(format!("similarity not symmetric at ({p}, {q})")));
                }
            }
        }
        if matches!(
            kind,
            SimilarityKind::Cosine | SimilarityKind::Rbf | SimilarityKind::LatentRbf
        ) && (0..m).any(|p| (values[[p, p]] - 1.0).abs() > SYMMETRY_TOL)
        {
            return Err(invalid("similarity diagonal must be 1"));
        }
        Ok(Self { ids, values, kind })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn kind(&self) -> SimilarityKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, p: usize, q: usize) -> Option<f64> {
        let v = self.values[[p, q]];
        (!v.is_nan()).then_some(v)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|s| s == id)
    }

    /// Sub-matrix over `ids`, in that order.
    pub fn restrict(&self, ids: &[String]) -> Result<Self> {
        let idx = ids
            .iter()
            .map(|id| {
                self.index_of(id).ok_or_else(|| Error::UnknownId {
                    axis: Axis::CellLine,
                    id: id.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let values = Array2::from_shape_fn((idx.len(), idx.len()), |(a, b)| self.values[[idx[a], idx[b]]]);
        Ok(Self {
            ids: ids.to_vec(),
            values,
            kind: self.kind,
        })
    }

    /// Similarities from `row` ids to `col` ids as a dense block.
    pub fn block(&self, rows: &[String], cols: &[String]) -> Result<Array2<f64>> {
        let find = |id: &String| {
            self.index_of(id).ok_or_else(|| Error::UnknownId {
                axis: Axis::CellLine,
                id: id.clone(),
            })
        };
        let r = rows.iter().map(find).collect::<Result<Vec<_>>>()?;
        let c = cols.iter().map(find).collect::<Result<Vec<_>>>()?;
        Ok(Array2::from_shape_fn((r.len(), c.len()), |(a, b)| {
            self.values[[r[a], c[b]]]
        }))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["cell_line".to_owned()];
        header.extend(self.ids.iter().cloned());
        w.write_record(&header)?;
        for (p, id) in self.ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(
                self.values
                    .row(p)
                    .iter()
                    .map(|&v| if v.is_nan() { String::new() } else { fmt_f64(v) }),
            );
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f)
    }

    pub fn from_reader<R: Read>(reader: R, kind: SimilarityKind) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut records = rdr.records();
        let header = records
            .next()
            .ok_or_else(|| Error::Empty("similarity table has no header".into()))??;
        let ids: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
        let mut flat = Vec::with_capacity(ids.len() * ids.len());
        for (r, rec) in records.enumerate() {
            let rec = rec?;
            if rec.get(0) != ids.get(r).map(String::as_str) {
                return Err(Error::Shape(format!("row {} id does not match header order", r + 2)));
            }
            for (c, field) in rec.iter().skip(1).enumerate() {
                if field.is_empty() {
                    flat.push(f64::NAN);
                } else {
                    flat.push(field.parse().map_err(|_| Error::Parse {
                        row: r + 2,
                        column: c + 2,
                        value: field.to_owned(),
                    })?);
                }
            }
        }
        let values = Array2::from_shape_vec((ids.len(), ids.len()), flat).map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(ids, values, kind)
    }

    pub fn load(path: impl AsRef<Path>, kind: SimilarityKind) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(f, kind)
    }
}

fn check_rows(ids: &[String], features: ArrayView2<'_, f64>) -> Result<()> {
    if ids.len() != features.nrows() {
        return Err(Error::Shape(format!(
            "{} ids for {} feature rows",
            ids.len(),
            features.nrows()
        )));
    }
    Ok(())
}

/// `w_pq = <x_p, x_q> / (|x_p| |x_q|)`.
pub fn cosine_similarity(ids: &[String], features: ArrayView2<'_, f64>) -> Result<SimilarityMatrix> {
    check_rows(ids, features)?;
    let norms: Vec<f64> = features.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    if let Some(p) = norms.iter().position(|&n| n == 0.0) {
        return Err(invalid(format!("cell line {} has an all-zero feature row", ids[p])));
    }
    let m = ids.len();
    let mut values = Array2::from_elem((m, m), 1.0);
    for p in 0..m {
        for q in p + 1..m {
            let c = (features.row(p).dot(&features.row(q)) / (norms[p] * norms[q])).clamp(-1.0, 1.0);
            values[[p, q]] = c;
            values[[q, p]] = c;
        }
    }
    SimilarityMatrix::new(ids.to_vec(), values, SimilarityKind::Cosine)
}

fn sq_dist(features: ArrayView2<'_, f64>, p: usize, q: usize) -> f64 {
    features
        .row(p)
        .iter()
        .zip(features.row(q))
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// `w_pq = exp(-gamma |x_p - x_q|^2)`.
pub fn rbf_similarity(ids: &[String], features: ArrayView2<'_, f64>, gamma: f64) -> Result<SimilarityMatrix> {
    rbf_of_kind(ids, features, gamma, SimilarityKind::Rbf)
}

fn rbf_of_kind(
    ids: &[String],
    features: ArrayView2<'_, f64>,
    gamma: f64,
    kind: SimilarityKind,
) -> Result<SimilarityMatrix> {
    check_rows(ids, features)?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid(format!("rbf gamma must be positive, got {gamma}")));
    }
    let m = ids.len();
    let mut values = Array2::from_elem((m, m), 1.0);
    for p in 0..m {
        for q in p + 1..m {
            let w = (-gamma * sq_dist(features, p, q)).exp();
            values[[p, q]] = w;
            values[[q, p]] = w;
        }
    }
    SimilarityMatrix::new(ids.to_vec(), values, kind)
}

/// Median heuristic bandwidth: `1 / (2 * median pairwise squared distance)`.
pub fn median_heuristic_gamma(features: ArrayView2<'_, f64>) -> Result<f64> {
    let m = features.nrows();
    let mut d: Vec<f64> = (0..m)
        .flat_map(|p| (p + 1..m).map(move |q| (p, q)))
        .map(|(p, q)| sq_dist(features, p, q))
        .collect();
    if d.is_empty() {
        return Err(Error::Empty("median heuristic needs at least two rows".into()));
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let median = if d.len() % 2 == 1 {
        d[mid]
    } else {
        0.5 * (d[mid - 1] + d[mid])
    };
    if median <= 0.0 {
        return Err(invalid("median pairwise distance is zero"));
    }
    Ok(1.0 / (2.0 * median))
}

/// RBF similarity between cell-line latent vectors (columns of `U`).
pub fn latent_rbf_similarity(model: &LatentModel, gamma: Option<f64>) -> Result<SimilarityMatrix> {
    let feats = model.u().t();
    let gamma = match gamma {
        Some(g) => g,
        None => median_heuristic_gamma(feats)?,
    };
    rbf_of_kind(model.cell_line_ids(), feats, gamma, SimilarityKind::LatentRbf)
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub(crate) fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &o in &order[start..end] {
            ranks[o] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    let denom = (saa * sbb).sqrt();
    (denom > 0.0).then(|| (sab / denom).clamp(-1.0, 1.0))
}

/// Spearman rank correlation; `None` with fewer than two points or zero
/// rank variance.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Minimum number of commonly observed drugs for a profile similarity.
pub const MIN_COMMON_DRUGS: usize = 3;

/// Spearman correlation of drug-response profiles over commonly observed
/// drugs. Pairs with fewer than three shared drugs are left undefined.
pub fn spearman_profile_similarity(resp: &ResponseMatrix) -> Result<SimilarityMatrix> {
    let m = resp.n_cell_lines();
    let mut values = Array2::from_elem((m, m), f64::NAN);
    for p in 0..m {
        for q in p..m {
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for i in 0..resp.n_drugs() {
                if let (Some(x), Some(y)) = (resp.get(p, i), resp.get(q, i)) {
                    a.push(x);
                    b.push(y);
                }
            }
            let rho = if a.len() >= MIN_COMMON_DRUGS {
                spearman(&a, &b)
            } else {
                None
            };
            let v = rho.unwrap_or(f64::NAN);
            values[[p, q]] = v;
            values[[q, p]] = v;
        }
    }
    SimilarityMatrix::new(resp.cell_line_ids().to_vec(), values, SimilarityKind::SpearmanProfile)
}

/// Correlation between two similarity matrices for one group of cell lines.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupCorrelation {
    pub group: String,
    pub n_cell_lines: usize,
    pub n_pairs: usize,
    /// `None` when too few defined pairs remain.
    pub value: Option<f64>,
}

/// Spearman correlation between the upper-triangle entries of `a` and `b`,
/// overall or within each group of `grouping` (cell-line id → group name).
/// Pairs undefined in either matrix are dropped; groups with fewer than two
/// cell lines are skipped.
pub fn similarity_correlation(
    a: &SimilarityMatrix,
    b: &SimilarityMatrix,
    grouping: Option<&BTreeMap<String, String>>,
) -> Result<Vec<GroupCorrelation>> {
    let b = b.restrict(a.ids())?;
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    match grouping {
        None => {
            groups.insert("all".to_owned(), (0..a.len()).collect());
        }
        Some(map) => {
            for (p, id) in a.ids().iter().enumerate() {
                if let Some(g) = map.get(id) {
                    groups.entry(g.clone()).or_default().push(p);
                }
            }
        }
    }
    let mut out = Vec::new();
    for (name, members) in groups {
        if members.len() < 2 {
            log::warn!("skipping group {name}: fewer than two cell lines");
            continue;
        }
        let (mut xa, mut xb) = (Vec::new(), Vec::new());
        for (k, &p) in members.iter().enumerate() {
            for &q in &members[k + 1..] {
                if let (Some(x), Some(y)) = (a.get(p, q), b.get(p, q)) {
                    xa.push(x);
                    xb.push(y);
                }
            }
        }
        out.push(GroupCorrelation {
            group: name,
            n_cell_lines: members.len(),
            n_pairs: xa.len(),
            value: spearman(&xa, &xb),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|p| format!("C{p}")).collect()
    }

    #[test]
    fn cosine_examples() {
        let s = cosine_similarity(&ids(2), arr2(&[[1.0, 2.0], [1.0, 2.0]]).view()).unwrap();
        assert!((s.get(0, 1).unwrap() - 1.0).abs() < 1e-15);
        let s = cosine_similarity(&ids(2), arr2(&[[1.0, 0.0], [0.0, 1.0]]).view()).unwrap();
        assert_eq!(s.get(0, 1), Some(0.0));
        let s = cosine_similarity(&ids(2), arr2(&[[1.0, 1.0], [1.0, 0.0]]).view()).unwrap();
        assert!((s.get(0, 1).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        let err = cosine_similarity(&ids(2), arr2(&[[1.0, 1.0], [0.0, 0.0]]).view()).unwrap_err();
        assert!(err.to_string().contains("C1"));
    }

    #[test]
    fn rbf_examples() {
        let f = arr2(&[[0.0, 0.0], [1.0, 0.0]]);
        let s = rbf_similarity(&ids(2), f.view(), 1.0).unwrap();
        assert!((s.get(0, 1).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(s.get(0, 0), Some(1.0));
        let w: Vec<f64> = [1.0, 10.0, 100.0]
            .iter()
            .map(|&g| rbf_similarity(&ids(2), f.view(), g).unwrap().get(0, 1).unwrap())
            .collect();
        assert!(w[0] > w[1] && w[1] > w[2]);
        assert!(rbf_similarity(&ids(2), f.view(), 0.0).is_err());
    }

    #[test]
    fn median_gamma() {
        // squared distances 1, 4, 1 -> median 1
        let f = arr2(&[[0.0], [1.0], [2.0]]);
        assert_eq!(median_heuristic_gamma(f.view()).unwrap(), 0.5);
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(average_ranks(&[5.0, 1.0, 5.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn profile_similarity() {
        let resp =
            ResponseMatrix::from_reader("id,A,B,C,D\nX,1,2,3,4\nY,1,2,3,4\nZ,4,3,2,1\nW,1,,,5\n".as_bytes()).unwrap();
        let s = spearman_profile_similarity(&resp).unwrap();
        assert_eq!(s.get(0, 1), Some(1.0));
        assert_eq!(s.get(0, 2), Some(-1.0));
        assert_eq!(s.get(0, 3), None);
    }

    #[test]
    fn correlation_of_equal_and_negated() {
        let v = arr2(&[
            [1.0, 0.2, 0.5, 0.1],
            [0.2, 1.0, 0.3, 0.7],
            [0.5, 0.3, 1.0, 0.4],
            [0.1, 0.7, 0.4, 1.0],
        ]);
        let a = SimilarityMatrix::new(ids(4), v.clone(), SimilarityKind::SpearmanProfile).unwrap();
        let r = similarity_correlation(&a, &a, None).unwrap();
        assert_eq!(r[0].value, Some(1.0));
        assert_eq!(r[0].n_pairs, 6);
        let neg = SimilarityMatrix::new(ids(4), v.mapv(|x| -x), SimilarityKind::SpearmanProfile).unwrap();
        assert_eq!(similarity_correlation(&a, &neg, None).unwrap()[0].value, Some(-1.0));
    }

    #[test]
    fn correlation_hand_case_and_groups() {
        // Upper triangles a = [0.2,0.5,0.1,0.3,0.7,0.4], b = [0.9,0.1,0.3,0.5,0.2,0.8]
        // ranks a = [2,5,1,3,6,4], b = [6,1,3,4,2,5]; d = [-4,4,-2,-1,4,-1]
        // sum d^2 = 54, rho = 1 - 6*54/(6*35) = -19/35
        let a = SimilarityMatrix::new(
            ids(4),
            arr2(&[
                [1.0, 0.2, 0.5, 0.1],
                [0.2, 1.0, 0.3, 0.7],
                [0.5, 0.3, 1.0, 0.4],
                [0.1, 0.7, 0.4, 1.0],
            ]),
            SimilarityKind::Rbf,
        )
        .unwrap();
        let b = SimilarityMatrix::new(
            ids(4),
            arr2(&[
                [1.0, 0.9, 0.1, 0.3],
                [0.9, 1.0, 0.5, 0.2],
                [0.1, 0.5, 1.0, 0.8],
                [0.3, 0.2, 0.8, 1.0],
            ]),
            SimilarityKind::Rbf,
        )
        .unwrap();
        let r = similarity_correlation(&a, &b, None).unwrap();
        assert!((r[0].value.unwrap() + 19.0 / 35.0).abs() < 1e-12);

        let mut g = BTreeMap::new();
        for (id, grp) in [("C0", "x"), ("C1", "x"), ("C2", "x"), ("C3", "y")] {
            g.insert(id.to_string(), grp.to_string());
        }
        let r = similarity_correlation(&a, &b, Some(&g)).unwrap();
        assert_eq!(r.len(), 1, "singleton group y is skipped");
        assert_eq!(r[0].group, "x");
        assert_eq!(r[0].n_pairs, 3);
    }

    proptest! {
        #[test]
        fn rbf_permutation_equivariant(vals in proptest::collection::vec(-3.0f64..3.0, 15), shift in 0usize..5) {
            let f = Array2::from_shape_vec((5, 3), vals).unwrap();
            let perm: Vec<usize> = (0..5).map(|i| (i + shift) % 5).collect();
            let fp = Array2::from_shape_fn((5, 3), |(r, c)| f[[perm[r], c]]);
            let s = rbf_similarity(&ids(5), f.view(), 0.7).unwrap();
            let sp = rbf_similarity(&ids(5), fp.view(), 0.7).unwrap();
            for a in 0..5 {
                for b in 0..5 {
                    prop_assert_eq!(sp.values()[[a, b]], s.values()[[perm[a], perm[b]]]);
                }
            }
        }

        #[test]
        fn constructed_matrices_are_valid(vals in proptest::collection::vec(0.1f64..3.0, 12)) {
            let f = Array2::from_shape_vec((4, 3), vals).unwrap();
            let c = cosine_similarity(&ids(4), f.view()).unwrap();
            prop_assert!(c.values().iter().all(|v| (-1.0..=1.0).contains(v)));
            let r = rbf_similarity(&ids(4), f.view(), median_heuristic_gamma(f.view()).unwrap()).unwrap();
            prop_assert!(r.values().iter().all(|v| *v > 0.0 && *v <= 1.0));
        }
    }
}
