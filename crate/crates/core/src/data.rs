//! Dataset containers, validation and CSV ingestion.
//!
//! A [`Dataset`] is immutable once built. Features are stored row-major and
//! shared behind an `Arc` so centered copies and forests never duplicate them.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl Features {
    pub fn from_row_major(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {}x{} matrix",
                values.len(),
                n_rows,
                n_cols
            )));
        }
        Ok(Self { n_rows, n_cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * n_cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::ShapeMismatch(format!(
                    "row {} has {} columns, expected {}",
                    i,
                    row.len(),
                    n_cols
                )));
            }
            values.extend_from_slice(row);
        }
        Self::from_row_major(rows.len(), n_cols, values)
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Non-fatal findings from [`Dataset::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Warning {
    /// Every unit sits in the same arm; treatment effects cannot be estimated.
    DegenerateTreatmentArm { arm: u8 },
}

/// Raw causal sample: features `X`, outcome `Y` and binary treatment `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Arc<Features>,
    outcome: Vec<f64>,
    treatment: Vec<f64>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Features,
        outcome: Vec<f64>,
        treatment: Vec<f64>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let d = Self {
            features: Arc::new(features),
            outcome,
            treatment,
            feature_names,
        };
        d.check_invariants()?;
        Ok(d)
    }

    /// Dataset with default feature names `X1..Xp`.
    pub fn unnamed(features: Features, outcome: Vec<f64>, treatment: Vec<f64>) -> Result<Self> {
        let names = (1..=features.n_cols()).map(|j| format!("X{j}")).collect();
        Self::new(features, outcome, treatment, names)
    }

    fn check_invariants(&self) -> Result<()> {
        let n = self.features.n_rows();
        if n == 0 {
            return Err(Error::TooFewRows { got: 0, need: 1 });
        }
        if self.features.n_cols() == 0 {
            return Err(Error::NoFeatures("dataset has zero feature columns".into()));
        }
        if self.outcome.len() != n || self.treatment.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "features have {} rows, outcome {}, treatment {}",
                n,
                self.outcome.len(),
                self.treatment.len()
            )));
        }
        if self.feature_names.len() != self.features.n_cols() {
            return Err(Error::ShapeMismatch(format!(
                "{} feature names for {} columns",
                self.feature_names.len(),
                self.features.n_cols()
            )));
        }
        for i in 0..n {
            for (j, &v) in self.features.row(i).iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFiniteValue {
                        row: i + 1,
                        column: self.feature_names[j].clone(),
                    });
                }
            }
            if !self.outcome[i].is_finite() {
                return Err(Error::NonFiniteValue { row: i + 1, column: "outcome".into() });
            }
            let w = self.treatment[i];
            if w != 0.0 && w != 1.0 {
                return Err(Error::NonBinaryTreatment { row: i + 1, value: w.to_string() });
            }
        }
        Ok(())
    }

    /// Re-checks every invariant and reports usability warnings.
    ///
    /// Estimation needs at least two rows, so `n = 1` is an error here even
    /// though such a dataset can be constructed.
    pub fn validate(&self) -> Result<Vec<Warning>> {
        self.check_invariants()?;
        if self.n() < 2 {
            return Err(Error::TooFewRows { got: self.n(), need: 2 });
        }
        let treated = self.treatment.iter().filter(|&&w| w == 1.0).count();
        let mut warnings = Vec::new();
        if treated == 0 {
            warnings.push(Warning::DegenerateTreatmentArm { arm: 0 });
        } else if treated == self.n() {
            warnings.push(Warning::DegenerateTreatmentArm { arm: 1 });
        }
        Ok(warnings)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.features.n_rows()
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.features.n_cols()
    }

    pub fn features(&self) -> &Features {
        &self.features
    }

    pub fn shared_features(&self) -> Arc<Features> {
        Arc::clone(&self.features)
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn treatment(&self) -> &[f64] {
        &self.treatment
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }
}

/// Non-empty set of feature columns, stored sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureSet {
    included: Vec<usize>,
}

impl FeatureSet {
    pub fn new(indices: impl IntoIterator<Item = usize>, p: usize) -> Result<Self> {
        let included: BTreeSet<usize> = indices.into_iter().collect();
        if included.is_empty() {
            return Err(Error::EmptyFeatureSet);
        }
        if let Some(&bad) = included.iter().find(|&&j| j >= p) {
            return Err(Error::FeatureOutOfRange { index: bad, p });
        }
        Ok(Self { included: included.into_iter().collect() })
    }

    pub fn all(p: usize) -> Result<Self> {
        Self::new(0..p, p)
    }

    /// All columns except `drop`.
    pub fn without(drop: &[usize], p: usize) -> Result<Self> {
        if let Some(&bad) = drop.iter().find(|&&j| j >= p) {
            return Err(Error::FeatureOutOfRange { index: bad, p });
        }
        Self::new((0..p).filter(|j| !drop.contains(j)), p)
    }

    pub fn indices(&self) -> &[usize] {
        &self.included
    }

    pub fn len(&self) -> usize {
        self.included.len()
    }

    pub fn is_empty(&self) -> bool {
        self.included.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.included.binary_search(&j).is_ok()
    }
}

/// Locally centered sample: residuals of outcome and treatment against
/// out-of-bag nuisance estimates.
#[derive(Debug, Clone)]
pub struct CenteredDataset {
    features: Arc<Features>,
    centered_outcome: Vec<f64>,
    centered_treatment: Vec<f64>,
    m_hat: Vec<f64>,
    pi_hat: Vec<f64>,
}

impl CenteredDataset {
    pub fn from_estimates(d: &Dataset, m_hat: Vec<f64>, pi_hat: Vec<f64>) -> Result<Self> {
        if m_hat.len() != d.n() || pi_hat.len() != d.n() {
            return Err(Error::ShapeMismatch("nuisance estimates do not match n".into()));
        }
        let centered_outcome = d.outcome().iter().zip(&m_hat).map(|(y, m)| y - m).collect();
        let centered_treatment = d.treatment().iter().zip(&pi_hat).map(|(w, p)| w - p).collect();
        Ok(Self {
            features: d.shared_features(),
            centered_outcome,
            centered_treatment,
            m_hat,
            pi_hat,
        })
    }

    /// Builds a centered sample directly from residuals; nuisance estimates are zero.
    pub fn from_residuals(
        features: Features,
        centered_outcome: Vec<f64>,
        centered_treatment: Vec<f64>,
    ) -> Result<Self> {
        let n = features.n_rows();
        if centered_outcome.len() != n || centered_treatment.len() != n {
            return Err(Error::ShapeMismatch("residual vectors do not match n".into()));
        }
        if centered_outcome.iter().chain(&centered_treatment).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { row: 0, column: "residual".into() });
        }
        Ok(Self {
            features: Arc::new(features),
            centered_outcome,
            centered_treatment,
            m_hat: vec![0.0; n],
            pi_hat: vec![0.0; n],
        })
    }

    pub fn n(&self) -> usize {
        self.features.n_rows()
    }

    pub fn p(&self) -> usize {
        self.features.n_cols()
    }

    pub fn features(&self) -> &Features {
        &self.features
    }

    pub fn shared_features(&self) -> Arc<Features> {
        Arc::clone(&self.features)
    }

    pub fn centered_outcome(&self) -> &[f64] {
        &self.centered_outcome
    }

    pub fn centered_treatment(&self) -> &[f64] {
        &self.centered_treatment
    }

    pub fn m_hat(&self) -> &[f64] {
        &self.m_hat
    }

    pub fn pi_hat(&self) -> &[f64] {
        &self.pi_hat
    }
}

fn parse_treatment(raw: &str) -> Option<f64> {
    match raw.trim() {
        "0" => Some(0.0),
        "1" => Some(1.0),
        s if s.eq_ignore_ascii_case("false") => Some(0.0),
        s if s.eq_ignore_ascii_case("true") => Some(1.0),
        _ => None,
    }
}

fn parse_real(raw: &str) -> Option<f64> {
    raw.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads a comma-delimited file with a header row. Every column other than
/// the outcome and treatment becomes a feature, in header order. Row numbers
/// in errors count data rows from 1.
pub fn load_csv(path: impl AsRef<Path>, outcome_col: &str, treatment_col: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .delimiter(b',')
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let y_idx = headers
        .iter()
        .position(|h| h == outcome_col)
        .ok_or_else(|| Error::MissingColumn(outcome_col.to_string()))?;
    let w_idx = headers
        .iter()
        .position(|h| h == treatment_col)
        .ok_or_else(|| Error::MissingColumn(treatment_col.to_string()))?;
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != y_idx && c != w_idx).collect();
    if feature_cols.is_empty() {
        return Err(Error::NoFeatures("no columns left besides outcome and treatment".into()));
    }

    let mut values = Vec::new();
    let mut outcome = Vec::new();
    let mut treatment = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != headers.len() {
            return Err(Error::MissingValue { row, column: format!("<{} cells>", record.len()) });
        }
        for (c, cell) in record.iter().enumerate() {
            if cell.trim().is_empty() {
                return Err(Error::MissingValue { row, column: headers[c].clone() });
            }
        }
        for &c in &feature_cols {
            let v = parse_real(&record[c])
                .ok_or_else(|| Error::NonFiniteValue { row, column: headers[c].clone() })?;
            values.push(v);
        }
        outcome.push(
            parse_real(&record[y_idx])
                .ok_or_else(|| Error::NonFiniteValue { row, column: headers[y_idx].clone() })?,
        );
        treatment.push(parse_treatment(&record[w_idx]).ok_or_else(|| {
            Error::NonBinaryTreatment { row, value: record[w_idx].to_string() }
        })?);
    }
    if outcome.is_empty() {
        return Err(Error::EmptyFile);
    }
    let names = feature_cols.iter().map(|&c| headers[c].clone()).collect();
    let features = Features::from_row_major(outcome.len(), feature_cols.len(), values)?;
    Dataset::new(features, outcome, treatment, names)
}

/// Writes features in column order, then outcome and treatment. Reals use 17
/// significant digits so a reload is bit-exact.
pub fn write_csv(d: &Dataset, path: impl AsRef<Path>, outcome_col: &str, treatment_col: &str) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    let mut header: Vec<&str> = d.feature_names().iter().map(String::as_str).collect();
    header.push(outcome_col);
    header.push(treatment_col);
    writeln!(out, "{}", header.join(","))?;
    for i in 0..d.n() {
        let mut line = String::new();
        for &v in d.features().row(i) {
            line.push_str(&format!("{v:.16e},"));
        }
        line.push_str(&format!("{:.16e},{}", d.outcome()[i], d.treatment()[i] as u8));
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_three_rows() {
        let f = write("x1,x2,y,w\n0.5,1,2.0,1\n-1,2,3,0\n3e2,4,5,true\n");
        let d = load_csv(f.path(), "y", "w").unwrap();
        assert_eq!((d.n(), d.p()), (3, 2));
        assert_eq!(d.feature_names(), ["x1", "x2"]);
        assert_eq!(d.features().get(2, 0), 300.0);
        assert_eq!(d.treatment(), [1.0, 0.0, 1.0]);
    }

    #[test]
    fn features_keep_header_order_around_targets() {
        let f = write("w,a,y,b\n1,1,2,3\n0,4,5,6\n");
        let d = load_csv(f.path(), "y", "w").unwrap();
        assert_eq!(d.feature_names(), ["a", "b"]);
        assert_eq!(d.features().row(1), [4.0, 6.0]);
    }

    #[test]
    fn rejects_non_binary_treatment() {
        let f = write("x1,x2,y,w\n0,1,2,1\n0,1,2,2\n");
        assert!(matches!(
            load_csv(f.path(), "y", "w"),
            Err(Error::NonBinaryTreatment { row: 2, .. })
        ));
    }

    #[test]
    fn reports_nan_row() {
        let f = write("x1,y,w\n1,1,0\n2,1,0\n3,1,1\n4,1,0\nNaN,1,1\n6,1,0\n");
        assert!(matches!(
            load_csv(f.path(), "y", "w"),
            Err(Error::NonFiniteValue { row: 5, .. })
        ));
    }

    #[test]
    fn rejects_missing_cells_and_columns() {
        let f = write("x1,y,w\n1,,0\n");
        assert!(matches!(load_csv(f.path(), "y", "w"), Err(Error::MissingValue { row: 1, .. })));
        let f = write("x1,y,w\n1,2,0\n");
        assert!(matches!(load_csv(f.path(), "y", "treat"), Err(Error::MissingColumn(c)) if c == "treat"));
        let f = write("x1,y,w\n");
        assert!(matches!(load_csv(f.path(), "y", "w"), Err(Error::EmptyFile)));
    }

    #[test]
    fn validate_flags_degenerate_arm_and_single_row() {
        let x = Features::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let d = Dataset::unnamed(x, vec![1.0, 2.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(d.validate().unwrap(), vec![Warning::DegenerateTreatmentArm { arm: 0 }]);

        let x = Features::from_rows(&[vec![1.0]]).unwrap();
        let d = Dataset::unnamed(x, vec![1.0], vec![1.0]).unwrap();
        assert!(matches!(d.validate(), Err(Error::TooFewRows { got: 1, .. })));
    }

    #[test]
    fn construction_rejects_bad_values() {
        let x = Features::from_rows(&[vec![f64::INFINITY], vec![2.0]]).unwrap();
        assert!(matches!(
            Dataset::unnamed(x, vec![1.0, 2.0], vec![0.0, 1.0]),
            Err(Error::NonFiniteValue { row: 1, .. })
        ));
        let x = Features::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(matches!(
            Dataset::unnamed(x, vec![1.0, 2.0], vec![0.0, 0.5]),
            Err(Error::NonBinaryTreatment { row: 2, .. })
        ));
    }

    #[test]
    fn feature_set_rules() {
        assert!(matches!(FeatureSet::new([], 3), Err(Error::EmptyFeatureSet)));
        assert!(matches!(FeatureSet::new([3], 3), Err(Error::FeatureOutOfRange { index: 3, p: 3 })));
        assert!(matches!(FeatureSet::without(&[0, 1], 2), Err(Error::EmptyFeatureSet)));
        let fs = FeatureSet::without(&[1], 4).unwrap();
        assert_eq!(fs.indices(), [0, 2, 3]);
        assert!(!fs.contains(1));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn csv_round_trip_is_bit_exact(
            rows in prop::collection::vec(
                (prop::collection::vec(-1e6f64..1e6, 3), -1e3f64..1e3, any::<bool>()), 1..20)
        ) {
            let x: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
            let y = rows.iter().map(|r| r.1).collect();
            let w = rows.iter().map(|r| r.2 as u8 as f64).collect();
            let d = Dataset::unnamed(Features::from_rows(&x).unwrap(), y, w).unwrap();
            let f = tempfile::NamedTempFile::new().unwrap();
            write_csv(&d, f.path(), "y", "w").unwrap();
            let back = load_csv(f.path(), "y", "w").unwrap();
            prop_assert_eq!(back, d);
        }
    }
}
