//! Per-cell-line percentile labeling of sensitive drugs.
//!
//! A drug is sensitive in a cell line when its response is strictly below
//! the cell line's θ-th percentile response. Percentiles use linear
//! interpolation between closest ranks: on the ascending sort of `N` values
//! the 1-based rank is `1 + (θ/100)(N − 1)`.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::data::ResponseMatrix;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Sensitive,
    Insensitive,
    Unknown,
}

impl Label {
    pub fn is_sensitive(self) -> bool {
        self == Label::Sensitive
    }

    fn as_csv(self) -> &'static str {
        match self {
            Label::Sensitive => "1",
            Label::Insensitive => "0",
            Label::Unknown => "NA",
        }
    }
}

/// Where the per-cell-line thresholds came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    /// Thresholds from training responses, applied to train and test drugs.
    TrainDerived,
    /// Thresholds from each held-out cell line's own observed responses.
    GroundTruthDerived,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityLabels {
    cell_line_ids: Vec<String>,
    drug_ids: Vec<String>,
    labels: Array2<Label>,
    thresholds: Vec<f64>,
    theta: f64,
    source: LabelSource,
}

impl SensitivityLabels {
    pub fn cell_line_ids(&self) -> &[String] {
        &self.cell_line_ids
    }

    pub fn drug_ids(&self) -> &[String] {
        &self.drug_ids
    }

    pub fn labels(&self) -> &Array2<Label> {
        &self.labels
    }

    pub fn get(&self, p: usize, i: usize) -> Label {
        self.labels[[p, i]]
    }

    /// Per-cell-line thresholds in cell-line order.
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn source(&self) -> LabelSource {
        self.source
    }

    /// Drug indices labeled sensitive in cell line `p`.
    pub fn sensitive(&self, p: usize) -> Vec<usize> {
        self.with_label(p, Label::Sensitive)
    }

    pub fn insensitive(&self, p: usize) -> Vec<usize> {
        self.with_label(p, Label::Insensitive)
    }

    fn with_label(&self, p: usize, want: Label) -> Vec<usize> {
        self.labels
            .row(p)
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == want).then_some(i))
            .collect()
    }

    /// Builds labels from an explicit table, e.g. one read back from CSV.
    pub fn from_table(
        cell_line_ids: Vec<String>,
        drug_ids: Vec<String>,
        labels: Array2<Label>,
        theta: f64,
        source: LabelSource,
    ) -> Result<Self> {
        if labels.dim() != (cell_line_ids.len(), drug_ids.len()) {
            return Err(Error::Shape("label table does not match ids".into()));
        }
        let thresholds = vec![f64::NAN; cell_line_ids.len()];
        Ok(Self {
            cell_line_ids,
            drug_ids,
            labels,
            thresholds,
            theta,
            source,
        })
    }

    /// Writes the labels as a CSV over `{1, 0, NA}`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["cell_line".to_owned()];
        header.extend(self.drug_ids.iter().cloned());
        w.write_record(&header)?;
        for (p, id) in self.cell_line_ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.labels.row(p).iter().map(|l| l.as_csv().to_owned()));
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

    /// Reads a `{1, 0, NA}` label CSV. Empty cells are read as unknown.
    pub fn from_reader<R: std::io::Read>(reader: R, theta: f64, source: LabelSource) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut records = rdr.records();
        let header = records
            .next()
            .ok_or_else(|| Error::Empty("label table has no header".into()))??;
        let drug_ids: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
        let mut cell_line_ids = Vec::new();
        let mut flat = Vec::new();
        for (r, rec) in records.enumerate() {
            let rec = rec?;
            let mut it = rec.iter();
            cell_line_ids.push(it.next().unwrap_or_default().to_owned());
            for (c, field) in it.enumerate() {
                flat.push(match field {
                    "1" => Label::Sensitive,
                    "0" => Label::Insensitive,
                    "NA" | "" => Label::Unknown,
                    other => {
                        return Err(Error::Parse {
                            row: r + 2,
                            column: c + 2,
                            value: other.to_owned(),
                        })
                    }
                });
            }
        }
        let labels = Array2::from_shape_vec((cell_line_ids.len(), drug_ids.len()), flat)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Self::from_table(cell_line_ids, drug_ids, labels, theta, source)
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < 100.0 {
        Ok(())
    } else {
        Err(invalid(format!("theta must lie in (0, 100), got {theta}")))
    }
}

/// Linearly interpolated θ-th percentile of `values`.
pub fn percentile_threshold(values: &[f64], theta: f64) -> Result<f64> {
    check_theta(theta)?;
    if values.is_empty() {
        return Err(Error::Empty("percentile of an empty list".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("percentile input contains non-finite values"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(interpolated_percentile(&sorted, theta))
}

/// Percentile of an already sorted, non-empty slice.
pub(crate) fn interpolated_percentile(sorted: &[f64], theta: f64) -> f64 {
    let pos = (theta / 100.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

fn row_threshold(resp: &ResponseMatrix, p: usize, theta: f64) -> Result<f64> {
    let vals: Vec<f64> = resp.row_observed(p).map(|(_, v)| v).collect();
    if vals.is_empty() {
        return Err(Error::AllMissing {
            axis: crate::error::Axis::CellLine,
            id: resp.cell_line_ids()[p].clone(),
        });
    }
    percentile_threshold(&vals, theta)
}

fn apply(resp: &ResponseMatrix, thresholds: &[f64], theta: f64, source: LabelSource) -> SensitivityLabels {
    let labels = Array2::from_shape_fn((resp.n_cell_lines(), resp.n_drugs()), |(p, i)| match resp.get(p, i) {
        Some(v) if v < thresholds[p] => Label::Sensitive,
        Some(_) => Label::Insensitive,
        None => Label::Unknown,
    });
    SensitivityLabels {
        cell_line_ids: resp.cell_line_ids().to_vec(),
        drug_ids: resp.drug_ids().to_vec(),
        labels,
        thresholds: thresholds.to_vec(),
        theta,
        source,
    }
}

/// Labels training and testing responses with thresholds taken from the
/// training responses only.
pub fn label_train_test(
    train: &ResponseMatrix,
    test: &ResponseMatrix,
    theta: f64,
) -> Result<(SensitivityLabels, SensitivityLabels)> {
    check_theta(theta)?;
    if train.cell_line_ids() != test.cell_line_ids() {
        return Err(invalid("train and test must share the same cell-line axis"));
    }
    let thresholds = (0..train.n_cell_lines())
        .map(|p| row_threshold(train, p, theta))
        .collect::<Result<Vec<_>>>()?;
    Ok((
        apply(train, &thresholds, theta, LabelSource::TrainDerived),
        apply(test, &thresholds, theta, LabelSource::TrainDerived),
    ))
}

/// Labels held-out cell lines using each one's own observed responses.
pub fn label_new_cell_lines(test: &ResponseMatrix, theta: f64) -> Result<SensitivityLabels> {
    check_theta(theta)?;
    let thresholds = (0..test.n_cell_lines())
        .map(|p| row_threshold(test, p, theta))
        .collect::<Result<Vec<_>>>()?;
    Ok(apply(test, &thresholds, theta, LabelSource::GroundTruthDerived))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single_row(vals: &[f64]) -> ResponseMatrix {
        let n = vals.len();
        ResponseMatrix::dense(
            vec!["CL".into()],
            (0..n).map(|i| format!("D{i:03}")).collect(),
            Array2::from_shape_vec((1, n), vals.to_vec()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn percentile_examples() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((percentile_threshold(&v, 5.0).unwrap() - 5.95).abs() < 1e-12);
        assert_eq!(percentile_threshold(&[7.0; 9], 5.0).unwrap(), 7.0);
        assert_eq!(percentile_threshold(&[3.0], 50.0).unwrap(), 3.0);
        assert_eq!(percentile_threshold(&[10.0, 20.0, 30.0, 40.0], 50.0).unwrap(), 25.0);
        assert!((percentile_threshold(&[40.0, 10.0, 30.0, 20.0], 2.0).unwrap() - 10.6).abs() < 1e-12);
    }

    #[test]
    fn percentile_errors() {
        assert!(matches!(percentile_threshold(&[], 5.0), Err(Error::Empty(_))));
        assert!(percentile_threshold(&[1.0], 0.0).is_err());
        assert!(percentile_threshold(&[1.0], 100.0).is_err());
    }

    #[test]
    fn train_thresholds_apply_to_test() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let train = single_row(&v);
        let mut test_vals = vec![50.0; 100];
        test_vals[0] = 0.5;
        let test = single_row(&test_vals);
        let (tr, te) = label_train_test(&train, &test, 5.0).unwrap();
        assert_eq!(tr.sensitive(0), vec![0, 1, 2, 3, 4]);
        assert_eq!(te.sensitive(0), vec![0]);
        assert_eq!(tr.source(), LabelSource::TrainDerived);
    }

    #[test]
    fn minimum_at_threshold_gives_no_sensitive() {
        let train = single_row(&[5.0, 5.0, 5.0, 9.0]);
        let (tr, _) = label_train_test(&train, &train, 5.0).unwrap();
        assert!(tr.sensitive(0).is_empty());
        assert_eq!(tr.insensitive(0).len(), 4);
    }

    #[test]
    fn new_cell_line_examples() {
        let t = single_row(&[10.0, 20.0, 30.0, 40.0]);
        let l = label_new_cell_lines(&t, 50.0).unwrap();
        assert_eq!(l.sensitive(0), vec![0, 1]);
        let l = label_new_cell_lines(&t, 2.0).unwrap();
        assert_eq!(l.sensitive(0), vec![0]);
        let l = label_new_cell_lines(&single_row(&[3.0; 5]), 10.0).unwrap();
        assert!(l.sensitive(0).is_empty());
        assert_eq!(l.source(), LabelSource::GroundTruthDerived);
    }

    #[test]
    fn missing_entries_are_unknown() {
        let resp = ResponseMatrix::from_reader("id,A,B,C\nX,1,,3\nY,2,2,1\n".as_bytes()).unwrap();
        let (l, _) = label_train_test(&resp, &resp, 50.0).unwrap();
        assert_eq!(l.get(0, 1), Label::Unknown);
        let mut buf = Vec::new();
        l.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "cell_line,A,B,C\nX,1,NA,0\nY,0,0,1\n");
        let back = SensitivityLabels::from_reader(text.as_bytes(), 50.0, LabelSource::TrainDerived).unwrap();
        assert_eq!(back.labels(), l.labels());
    }

    /// Sensitive count re-derived from the sorted rank: values strictly below
    /// the interpolated threshold.
    fn count_by_rank(vals: &[f64], theta: f64) -> usize {
        let mut s = vals.to_vec();
        s.sort_by(f64::total_cmp);
        let pos = theta / 100.0 * (s.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let t = if lo + 1 < s.len() {
            s[lo] + (pos - lo as f64) * (s[lo + 1] - s[lo])
        } else {
            s[lo]
        };
        s.iter().take_while(|&&v| v < t).count()
    }

    proptest! {
        #[test]
        fn monotone_in_theta(vals in proptest::collection::vec(-100.0f64..100.0, 1..40),
                             t1 in 0.5f64..99.0, dt in 0.0f64..0.99) {
            let t2 = t1 + dt * (99.5 - t1);
            let r = single_row(&vals);
            let a = label_new_cell_lines(&r, t1).unwrap().sensitive(0);
            let b = label_new_cell_lines(&r, t2).unwrap().sensitive(0);
            prop_assert!(a.iter().all(|i| b.contains(i)));
        }

        #[test]
        fn counts_match_rank_and_bounds(vals in proptest::collection::btree_set(-1000i32..1000, 2..80),
                                        theta in 0.5f64..99.5) {
            let vals: Vec<f64> = vals.into_iter().map(f64::from).collect();
            let n = vals.len();
            let got = label_new_cell_lines(&single_row(&vals), theta).unwrap().sensitive(0).len();
            prop_assert_eq!(got, count_by_rank(&vals, theta));
            let exact = theta * n as f64 / 100.0;
            let lo = (exact.floor() as usize).saturating_sub(1);
            let hi = exact.ceil() as usize;
            prop_assert!(got >= lo && got <= hi, "{} not in [{}, {}]", got, lo, hi);
        }

        #[test]
        fn train_labels_ignore_test_data(train in proptest::collection::vec(0.0f64..10.0, 3..20),
                                         shift in -5.0f64..5.0) {
            let tr = single_row(&train);
            let te1 = single_row(&train.iter().map(|v| v + 1.0).collect::<Vec<_>>());
            let te2 = single_row(&train.iter().map(|v| v + shift).collect::<Vec<_>>());
            let (a, _) = label_train_test(&tr, &te1, 20.0).unwrap();
            let (b, _) = label_train_test(&tr, &te2, 20.0).unwrap();
            prop_assert_eq!(a.labels(), b.labels());
        }
    }
}
