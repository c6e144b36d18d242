//! In-memory tables for drug responses and gene expression.
//!
//! Both tables are read from CSV files whose first row holds column ids and
//! whose first column holds cell-line ids. An empty cell is a missing value.
//! Missingness is carried in an explicit mask; the value stored under a
//! missing cell is unspecified and must never be read.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Axis, Error, Result};

/// Cell-line × drug response scores. Lower scores mean higher sensitivity.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix {
    cell_line_ids: Vec<String>,
    drug_ids: Vec<String>,
    values: Array2<f64>,
    observed: Array2<bool>,
}

/// Cell-line × gene expression values. Fully observed.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    cell_line_ids: Vec<String>,
    gene_ids: Vec<String>,
    values: Array2<f64>,
}

/// A parsed CSV table before any domain validation.
struct RawTable {
    row_ids: Vec<String>,
    col_ids: Vec<String>,
    cells: Array2<Option<f64>>,
}

fn read_raw<R: Read>(reader: R) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| Error::Empty("table has no header row".into()))??;
    let col_ids: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    if col_ids.is_empty() {
        return Err(Error::Shape("header row has no column ids".into()));
    }

    let mut row_ids = Vec::new();
    let mut flat = Vec::new();
    for (r, record) in records.enumerate() {
        let record = record?;
        // 1-based file line; the header is line 1.
        let line = r + 2;
        let mut fields = record.iter();
        let id = fields.next().unwrap_or_default().to_owned();
        row_ids.push(id);
        for (c, field) in fields.enumerate() {
            if field.is_empty() {
                flat.push(None);
                continue;
            }
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row: line,
                column: c + 2,
                value: field.to_owned(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: line,
                    column: c + 2,
                });
            }
            flat.push(Some(v));
        }
    }
    if row_ids.is_empty() {
        return Err(Error::Empty("table has no data rows".into()));
    }
    let cells =
        Array2::from_shape_vec((row_ids.len(), col_ids.len()), flat).map_err(|e| Error::Shape(e.to_string()))?;
    Ok(RawTable {
        row_ids,
        col_ids,
        cells,
    })
}

fn check_unique(ids: &[String], axis: Axis) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId { axis, id: id.clone() });
        }
    }
    Ok(())
}

fn index_of(ids: &[String]) -> HashMap<&str, usize> {
    ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

/// Formats a value so that parsing it back yields the same bits.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

impl ResponseMatrix {
    /// Builds a validated matrix. Values under unobserved cells are ignored.
    pub fn new(
        cell_line_ids: Vec<String>,
        drug_ids: Vec<String>,
        values: Array2<f64>,
        observed: Array2<bool>,
    ) -> Result<Self> {
        let m = Self::from_parts(cell_line_ids, drug_ids, values, observed)?;
        m.check_coverage()?;
        Ok(m)
    }

    /// Like [`ResponseMatrix::new`] but allows rows or columns with no
    /// observations. Used for held-out partitions, where a drug may have no
    /// test entry in a given fold.
    pub fn new_partial(
        cell_line_ids: Vec<String>,
        drug_ids: Vec<String>,
        values: Array2<f64>,
        observed: Array2<bool>,
    ) -> Result<Self> {
        Self::from_parts(cell_line_ids, drug_ids, values, observed)
    }

    fn from_parts(
        cell_line_ids: Vec<String>,
        drug_ids: Vec<String>,
        mut values: Array2<f64>,
        observed: Array2<bool>,
    ) -> Result<Self> {
        let shape = (cell_line_ids.len(), drug_ids.len());
        if values.dim() != shape || observed.dim() != shape {
            return Err(Error::Shape(format!(
                "expected {}x{} values and mask, got {:?} and {:?}",
                shape.0,
                shape.1,
                values.dim(),
                observed.dim()
            )));
        }
        check_unique(&cell_line_ids, Axis::CellLine)?;
        check_unique(&drug_ids, Axis::Drug)?;
        for ((r, c), v) in values.indexed_iter_mut() {
            if observed[[r, c]] {
                if !v.is_finite() {
                    return Err(Error::NonFinite { row: r, column: c });
                }
            } else {
                *v = 0.0;
            }
        }
        Ok(Self {
            cell_line_ids,
            drug_ids,
            values,
            observed,
        })
    }

    /// Builds a fully observed matrix.
    pub fn dense(cell_line_ids: Vec<String>, drug_ids: Vec<String>, values: Array2<f64>) -> Result<Self> {
        let observed = Array2::from_elem(values.dim(), true);
        Self::new(cell_line_ids, drug_ids, values, observed)
    }

    fn check_coverage(&self) -> Result<()> {
        for (p, row) in self.observed.rows().into_iter().enumerate() {
            if !row.iter().any(|&o| o) {
                return Err(Error::AllMissing {
                    axis: Axis::CellLine,
                    id: self.cell_line_ids[p].clone(),
                });
            }
        }
        for (i, col) in self.observed.columns().into_iter().enumerate() {
            if !col.iter().any(|&o| o) {
                return Err(Error::AllMissing {
                    axis: Axis::Drug,
                    id: self.drug_ids[i].clone(),
                });
            }
        }
        Ok(())
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let raw = read_raw(reader)?;
        let observed = raw.cells.mapv(|c| c.is_some());
        let values = raw.cells.mapv(|c| c.unwrap_or(0.0));
        Self::new(raw.row_ids, raw.col_ids, values, observed)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["cell_line".to_owned()];
        header.extend(self.drug_ids.iter().cloned());
        w.write_record(&header)?;
        for (p, id) in self.cell_line_ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend((0..self.n_drugs()).map(|i| self.get(p, i).map(fmt_f64).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f)
    }

    pub fn n_cell_lines(&self) -> usize {
        self.cell_line_ids.len()
    }

    pub fn n_drugs(&self) -> usize {
        self.drug_ids.len()
    }

    pub fn n_observed(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    pub fn cell_line_ids(&self) -> &[String] {
        &self.cell_line_ids
    }

    pub fn drug_ids(&self) -> &[String] {
        &self.drug_ids
    }

    pub fn observed(&self) -> &Array2<bool> {
        &self.observed
    }

    /// Raw value table; entries under the missing mask are zero.
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn is_observed(&self, p: usize, i: usize) -> bool {
        self.observed[[p, i]]
    }

    pub fn get(&self, p: usize, i: usize) -> Option<f64> {
        self.observed[[p, i]].then(|| self.values[[p, i]])
    }

    /// Observed `(drug index, response)` pairs of one cell line.
    pub fn row_observed(&self, p: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.n_drugs()).filter_map(move |i| self.get(p, i).map(|v| (i, v)))
    }

    pub fn cell_line_index(&self, id: &str) -> Option<usize> {
        self.cell_line_ids.iter().position(|s| s == id)
    }

    pub fn drug_index(&self, id: &str) -> Option<usize> {
        self.drug_ids.iter().position(|s| s == id)
    }

    /// Sub-matrix over the given ids, in the order given. The result must
    /// satisfy the coverage invariant.
    pub fn restrict(&self, cell_lines: &[String], drugs: &[String]) -> Result<Self> {
        let m = self.subset(cell_lines, drugs)?;
        m.check_coverage()?;
        Ok(m)
    }

    /// Sub-matrix over the given ids without the coverage check.
    pub fn restrict_partial(&self, cell_lines: &[String], drugs: &[String]) -> Result<Self> {
        self.subset(cell_lines, drugs)
    }

    fn subset(&self, cell_lines: &[String], drugs: &[String]) -> Result<Self> {
        if cell_lines.is_empty() || drugs.is_empty() {
            return Err(Error::Empty("restrict needs non-empty id subsets".into()));
        }
        let rows = lookup(&self.cell_line_ids, cell_lines, Axis::CellLine)?;
        let cols = lookup(&self.drug_ids, drugs, Axis::Drug)?;
        let values = Array2::from_shape_fn((rows.len(), cols.len()), |(r, c)| self.values[[rows[r], cols[c]]]);
        let observed = Array2::from_shape_fn((rows.len(), cols.len()), |(r, c)| self.observed[[rows[r], cols[c]]]);
        Self::from_parts(cell_lines.to_vec(), drugs.to_vec(), values, observed)
    }

    /// Same ids and values with `keep` intersected into the mask. Coverage is
    /// not enforced.
    pub fn masked(&self, keep: &Array2<bool>) -> Result<Self> {
        if keep.dim() != self.observed.dim() {
            return Err(Error::Shape("mask shape does not match matrix".into()));
        }
        let observed = ndarray::Zip::from(&self.observed)
            .and(keep)
            .map_collect(|&a, &b| a && b);
        Self::from_parts(
            self.cell_line_ids.clone(),
            self.drug_ids.clone(),
            self.values.clone(),
            observed,
        )
    }
}

fn lookup(all: &[String], wanted: &[String], axis: Axis) -> Result<Vec<usize>> {
    let idx = index_of(all);
    check_unique(wanted, axis)?;
    wanted
        .iter()
        .map(|id| {
            idx.get(id.as_str())
                .copied()
                .ok_or_else(|| Error::UnknownId { axis, id: id.clone() })
        })
        .collect()
}

/// Reads and validates a response CSV.
pub fn load_response(path: impl AsRef<Path>) -> Result<ResponseMatrix> {
    let path = path.as_ref();
    let m = ResponseMatrix::from_reader(open(path)?)?;
    log::info!(
        "loaded {}: {} cell lines x {} drugs, {} observed",
        path.display(),
        m.n_cell_lines(),
        m.n_drugs(),
        m.n_observed()
    );
    Ok(m)
}

impl ExpressionMatrix {
    pub fn new(cell_line_ids: Vec<String>, gene_ids: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (cell_line_ids.len(), gene_ids.len()) {
            return Err(Error::Shape(format!(
                "expected {}x{} expression values, got {:?}",
                cell_line_ids.len(),
                gene_ids.len(),
                values.dim()
            )));
        }
        check_unique(&cell_line_ids, Axis::CellLine)?;
        check_unique(&gene_ids, Axis::Gene)?;
        if let Some(((r, c), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { row: r, column: c });
        }
        Ok(Self {
            cell_line_ids,
            gene_ids,
            values,
        })
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let raw = read_raw(reader)?;
        if let Some(((r, c), _)) = raw.cells.indexed_iter().find(|(_, v)| v.is_none()) {
            return Err(Error::MissingCell {
                row: r + 2,
                column: c + 2,
            });
        }
        let values = raw.cells.mapv(|c| c.unwrap_or_default());
        Self::new(raw.row_ids, raw.col_ids, values)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["cell_line".to_owned()];
        header.extend(self.gene_ids.iter().cloned());
        w.write_record(&header)?;
        for (p, id) in self.cell_line_ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.values.row(p).iter().map(|&v| fmt_f64(v)));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f)
    }

    pub fn cell_line_ids(&self) -> &[String] {
        &self.cell_line_ids
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    /// Rows reordered to `cell_lines` and columns restricted to `genes`
    /// (all genes when `None`).
    pub fn select(&self, cell_lines: &[String], genes: Option<&[String]>) -> Result<Self> {
        let rows = lookup(&self.cell_line_ids, cell_lines, Axis::CellLine)?;
        let gene_ids: Vec<String> = genes.map(<[String]>::to_vec).unwrap_or_else(|| self.gene_ids.clone());
        let cols = lookup(&self.gene_ids, &gene_ids, Axis::Gene)?;
        let values = Array2::from_shape_fn((rows.len(), cols.len()), |(r, c)| self.values[[rows[r], cols[c]]]);
        Self::new(cell_lines.to_vec(), gene_ids, values)
    }

    /// Checks that this matrix and `resp` describe the same set of cell
    /// lines and returns the expression reordered to the response's order.
    pub fn align_to(&self, resp: &ResponseMatrix) -> Result<Self> {
        let mine: HashSet<&str> = self.cell_line_ids.iter().map(String::as_str).collect();
        let theirs: HashSet<&str> = resp.cell_line_ids().iter().map(String::as_str).collect();
        let unmatched = resp
            .cell_line_ids()
            .iter()
            .find(|id| !mine.contains(id.as_str()))
            .or_else(|| self.cell_line_ids.iter().find(|id| !theirs.contains(id.as_str())));
        if let Some(id) = unmatched {
            return Err(Error::Alignment {
                axis: Axis::CellLine,
                id: id.clone(),
            });
        }
        self.select(resp.cell_line_ids(), None)
    }
}

/// Reads and validates an expression CSV. Empty cells are rejected.
pub fn load_expression(path: impl AsRef<Path>) -> Result<ExpressionMatrix> {
    let path = path.as_ref();
    let m = ExpressionMatrix::from_reader(open(path)?)?;
    log::info!(
        "loaded {}: {} cell lines x {} genes",
        path.display(),
        m.cell_line_ids.len(),
        m.n_genes()
    );
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SMALL: &str = "id,D1,D2,D3,D4\nCL1,0.5,,0.2,0.9\nCL2,0.1,0.4,,0.3\nCL3,0.7,0.8,0.6,0.2\n";

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn loads_with_missing_cells() {
        let m = ResponseMatrix::from_reader(SMALL.as_bytes()).unwrap();
        assert_eq!(m.n_cell_lines(), 3);
        assert_eq!(m.n_drugs(), 4);
        assert_eq!(m.n_observed(), 10);
        assert_eq!(m.get(0, 1), None);
        assert_eq!(m.get(2, 3), Some(0.2));
    }

    #[test]
    fn duplicate_drug_header() {
        let err = ResponseMatrix::from_reader("id,D1,D1\nCL1,1,2\n".as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "duplicate drug id D1");
    }

    #[test]
    fn all_missing_row_names_cell_line() {
        let err = ResponseMatrix::from_reader("id,D1,D2,D3,D4\nCL1,,,,\nCL2,1,2,3,4\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::AllMissing { axis: Axis::CellLine, ref id } if id == "CL1"));
    }

    #[test]
    fn parse_error_reports_coordinates() {
        let err = ResponseMatrix::from_reader("id,D1,D2\nCL1,1,abc\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, column: 3, .. }));
    }

    #[test]
    fn expression_rejects_missing_cells() {
        let csv = "id,G1,G2,G3,G4,G5\nCL1,1,2,3,4,5\nCL2,1,,3,4,5\nCL3,1,2,3,4,5\n";
        let err = ExpressionMatrix::from_reader(csv.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::MissingCell { row: 3, column: 3 }));
        let ok = "id,G1,G2,G3,G4,G5\nCL1,1,2,3,4,5\nCL2,1,2,3,4,5\nCL3,1,2,3,4,5\n";
        let e = ExpressionMatrix::from_reader(ok.as_bytes()).unwrap();
        assert_eq!(e.values().dim(), (3, 5));
    }

    #[test]
    fn alignment_names_unmatched_cell_line() {
        let expr = ExpressionMatrix::from_reader("id,G1\nCL1,1\nCL2,2\n".as_bytes()).unwrap();
        let resp = ResponseMatrix::from_reader("id,D1\nCL1,1\nCL2,2\nCL3,3\n".as_bytes()).unwrap();
        let err = expr.align_to(&resp).unwrap_err();
        assert!(matches!(err, Error::Alignment { ref id, .. } if id == "CL3"));
    }

    #[test]
    fn restrict_cases() {
        let m = ResponseMatrix::from_reader(SMALL.as_bytes()).unwrap();
        let sub = m
            .restrict(&ids(&["CL3", "CL1"]), &ids(&["D1", "D2", "D3", "D4"]))
            .unwrap();
        assert_eq!(sub.n_cell_lines(), 2);
        assert_eq!(sub.get(0, 3), Some(0.2));

        // D2 is missing for CL1.
        let err = m.restrict(&ids(&["CL1"]), &ids(&["D1", "D2"])).unwrap_err();
        assert!(matches!(err, Error::AllMissing { axis: Axis::Drug, ref id } if id == "D2"));

        let err = m.restrict(&ids(&["CL9"]), &ids(&["D1"])).unwrap_err();
        assert_eq!(err.to_string(), "unknown cell line CL9");
    }

    #[test]
    fn restrict_full_is_identity() {
        let m = ResponseMatrix::from_reader(SMALL.as_bytes()).unwrap();
        let again = m.restrict(m.cell_line_ids(), m.drug_ids()).unwrap();
        assert_eq!(again, m);
    }

    proptest! {
        #[test]
        fn csv_round_trip(
            vals in proptest::collection::vec(proptest::option::weighted(0.8, -1e6f64..1e6), 12)
        ) {
            let mut vals = vals;
            // keep coverage: first row and first column fully observed
            for i in 0..4 { if vals[i].is_none() { vals[i] = Some(1.0); } }
            for r in 0..3 { if vals[r * 4].is_none() { vals[r * 4] = Some(2.0); } }
            let observed = Array2::from_shape_fn((3, 4), |(r, c)| vals[r * 4 + c].is_some());
            let values = Array2::from_shape_fn((3, 4), |(r, c)| vals[r * 4 + c].unwrap_or(0.0));
            let m = ResponseMatrix::new(ids(&["a", "b", "c"]), ids(&["w", "x", "y", "z"]), values, observed).unwrap();
            let mut buf = Vec::new();
            m.write_csv(&mut buf).unwrap();
            let back = ResponseMatrix::from_reader(buf.as_slice()).unwrap();
            prop_assert_eq!(back.observed(), m.observed());
            for r in 0..3 {
                for c in 0..4 {
                    prop_assert_eq!(back.get(r, c).map(f64::to_bits), m.get(r, c).map(f64::to_bits));
                }
            }
        }
    }
}
