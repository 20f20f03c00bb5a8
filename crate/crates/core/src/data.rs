//! Incomplete design matrices, observed-entry standardization and CSV ingestion.
//!
//! A missing cell is described only by its mask bit. Whatever number sits in
//! `values` under a `false` mask bit is never read by any computation in this
//! crate, so callers may leave garbage (or NaN) there.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

/// An `n_rows x n_cols` matrix paired with an observation mask (`true` = observed).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedMatrix {
    values: Vec<f64>,
    mask: Vec<bool>,
    n_rows: usize,
    n_cols: usize,
}

impl ObservedMatrix {
    /// Builds a matrix from row-major `values` and `mask`.
    pub fn new(values: Vec<f64>, mask: Vec<bool>, n_rows: usize, n_cols: usize) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::InvalidParameter(format!(
                "matrix must be non-empty, got {n_rows}x{n_cols}"
            )));
        }
        let len = n_rows * n_cols;
        if values.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                found: values.len(),
            });
        }
        if mask.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                found: mask.len(),
            });
        }
        Ok(ObservedMatrix {
            values,
            mask,
            n_rows,
            n_cols,
        })
    }

    /// A matrix with every entry observed.
    pub fn fully_observed(values: Vec<f64>, n_rows: usize, n_cols: usize) -> Result<Self> {
        let mask = vec![true; values.len()];
        Self::new(values, mask, n_rows, n_cols)
    }

    /// Builds a matrix from rows of optional entries (`None` = missing).
    pub fn from_rows(rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n_rows * n_cols);
        let mut mask = Vec::with_capacity(n_rows * n_cols);
        for row in rows {
            if row.len() != n_cols {
                return Err(Error::DimensionMismatch {
                    expected: n_cols,
                    found: row.len(),
                });
            }
            for cell in row {
                values.push(cell.unwrap_or(0.0));
                mask.push(cell.is_some());
            }
        }
        Self::new(values, mask, n_rows, n_cols)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.n_cols + j]
    }

    /// The entry at `(i, j)`, or `None` when it is missing.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let idx = i * self.n_cols + j;
        if self.mask[idx] {
            Some(self.values[idx])
        } else {
            None
        }
    }

    /// The entry at `(i, j)` with missing cells read as zero (`Z = O * X`).
    #[inline]
    pub fn zeroed(&self, i: usize, j: usize) -> f64 {
        let idx = i * self.n_cols + j;
        if self.mask[idx] {
            self.values[idx]
        } else {
            0.0
        }
    }

    pub fn row(&self, i: usize) -> Vec<Option<f64>> {
        (0..self.n_cols).map(|j| self.get(i, j)).collect()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Raw row-major storage, including whatever sits under missing cells.
    pub fn raw_values(&self) -> &[f64] {
        &self.values
    }

    /// Number of observed entries in column `j`.
    pub fn observed_in_column(&self, j: usize) -> usize {
        (0..self.n_rows).filter(|&i| self.is_observed(i, j)).count()
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    /// The sub-matrix made of `rows`, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols);
        let mut mask = Vec::with_capacity(rows.len() * self.n_cols);
        for &i in rows {
            let start = i * self.n_cols;
            values.extend_from_slice(&self.values[start..start + self.n_cols]);
            mask.extend_from_slice(&self.mask[start..start + self.n_cols]);
        }
        Self::new(values, mask, rows.len(), self.n_cols)
    }

    /// The same matrix with missing cells filled in from `fill(i, j)`; observed
    /// cells are kept.
    pub(crate) fn filled_with<F: FnMut(usize, usize) -> f64>(&self, mut fill: F) -> Self {
        let mut values = self.values.clone();
        for i in 0..self.n_rows {
            for j in 0..self.n_cols {
                let idx = i * self.n_cols + j;
                if !self.mask[idx] {
                    values[idx] = fill(i, j);
                }
            }
        }
        ObservedMatrix {
            values,
            mask: vec![true; self.mask.len()],
            n_rows: self.n_rows,
            n_cols: self.n_cols,
        }
    }

    /// Row-major dense copy; missing entries become `NaN`.
    pub fn to_dense_nan(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.mask)
            .map(|(&v, &m)| if m { v } else { f64::NAN })
            .collect()
    }
}

/// A fully observed response vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseVector(Vec<f64>);

impl ResponseVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("response entry {i}")));
        }
        Ok(ResponseVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        ResponseVector(rows.iter().map(|&i| self.0[i]).collect())
    }
}

/// Affine transform taking raw coordinates to observed-entry standardized ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub col_means: Vec<f64>,
    pub col_scales: Vec<f64>,
    pub y_mean: f64,
}

impl Standardization {
    pub fn n_cols(&self) -> usize {
        self.col_means.len()
    }

    /// Maps a raw matrix with the same columns into standardized coordinates.
    pub fn apply(&self, x: &ObservedMatrix) -> Result<ObservedMatrix> {
        if x.n_cols() != self.n_cols() {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols(),
                found: x.n_cols(),
            });
        }
        let p = x.n_cols();
        let values = x
            .values
            .iter()
            .zip(&x.mask)
            .enumerate()
            .map(|(idx, (&v, &m))| {
                let j = idx % p;
                if m {
                    (v - self.col_means[j]) / self.col_scales[j]
                } else {
                    0.0
                }
            })
            .collect();
        ObservedMatrix::new(values, x.mask.clone(), x.n_rows(), p)
    }

    /// Inverse of [`Standardization::apply`] on observed entries.
    pub fn invert(&self, x: &ObservedMatrix) -> Result<ObservedMatrix> {
        if x.n_cols() != self.n_cols() {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols(),
                found: x.n_cols(),
            });
        }
        let p = x.n_cols();
        let values = x
            .values
            .iter()
            .zip(&x.mask)
            .enumerate()
            .map(|(idx, (&v, &m))| {
                let j = idx % p;
                if m {
                    v * self.col_scales[j] + self.col_means[j]
                } else {
                    0.0
                }
            })
            .collect();
        ObservedMatrix::new(values, x.mask.clone(), x.n_rows(), p)
    }

    /// Standardized row -> raw row.
    pub fn unstandardize_row(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.col_means.iter().zip(&self.col_scales))
            .map(|(&v, (&m, &s))| v * s + m)
            .collect()
    }

    /// Converts standardized coefficients into raw-coordinate `(intercept, beta)`.
    pub fn raw_coefficients(&self, beta_std: &[f64]) -> (f64, Vec<f64>) {
        let beta: Vec<f64> = beta_std
            .iter()
            .zip(&self.col_scales)
            .map(|(b, s)| b / s)
            .collect();
        let shift: f64 = beta.iter().zip(&self.col_means).map(|(b, m)| b * m).sum();
        (self.y_mean - shift, beta)
    }
}

/// Standardizes every column to observed-entry mean 0 and sample standard
/// deviation 1, and centers the response.
pub fn standardize(
    x: &ObservedMatrix,
    y: &ResponseVector,
) -> Result<(ObservedMatrix, ResponseVector, Standardization)> {
    if y.len() != x.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            found: y.len(),
        });
    }
    let p = x.n_cols();
    let mut col_means = Vec::with_capacity(p);
    let mut col_scales = Vec::with_capacity(p);
    for j in 0..p {
        let observed: Vec<f64> = (0..x.n_rows()).filter_map(|i| x.get(i, j)).collect();
        if observed.len() < 2 {
            return Err(Error::DegenerateColumn {
                column: j,
                observed: observed.len(),
                required: 2,
            });
        }
        if let Some(bad) = observed.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("column {j} contains {bad}")));
        }
        let n = observed.len() as f64;
        let mean = observed.iter().sum::<f64>() / n;
        let var = observed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let scale = var.sqrt();
        if !(scale > 0.0) || scale <= mean.abs() * 1e-14 {
            return Err(Error::ConstantColumn { column: j });
        }
        col_means.push(mean);
        col_scales.push(scale);
    }
    let y_mean = y.values().iter().sum::<f64>() / y.len() as f64;
    let transform = Standardization {
        col_means,
        col_scales,
        y_mean,
    };
    let xs = transform.apply(x)?;
    let ys = ResponseVector(y.values().iter().map(|v| v - y_mean).collect());
    Ok((xs, ys, transform))
}

/// A CSV file split into a feature matrix and a response.
#[derive(Debug, Clone)]
pub struct CsvData {
    pub feature_names: Vec<String>,
    pub features: ObservedMatrix,
    pub response: ResponseVector,
}

/// A CSV table of optional numbers, before any column is singled out.
#[derive(Debug, Clone)]
pub struct CsvTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl CsvTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    /// Matrix made of the named columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<ObservedMatrix> {
        let idx = names
            .iter()
            .map(|n| {
                self.column_index(n)
                    .ok_or_else(|| Error::Schema(format!("column {n:?} not found")))
            })
            .collect::<Result<Vec<_>>>()?;
        let rows: Vec<Vec<Option<f64>>> = self
            .rows
            .iter()
            .map(|r| idx.iter().map(|&j| r[j]).collect())
            .collect();
        ObservedMatrix::from_rows(&rows)
    }
}

/// Reads a header-led CSV; cells equal to `na_token` after trimming are missing.
pub fn read_csv_table<R: Read>(reader: R, na_token: &str) -> Result<CsvTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if headers.is_empty() {
        return Err(Error::Csv("missing header row".into()));
    }
    let mut rows = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        // data rows are 1-based, after the header
        let row_no = r + 1;
        let mut row = Vec::with_capacity(headers.len());
        for (c, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if cell == na_token {
                row.push(None);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: row_no,
                column: headers[c].clone(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: row_no,
                    column: headers[c].clone(),
                    value: cell.to_string(),
                });
            }
            row.push(Some(v));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Csv("no data rows".into()));
    }
    Ok(CsvTable { headers, rows })
}

/// Splits a table into features (every other column, in file order) and the response.
pub fn split_response(table: &CsvTable, response_column: &str) -> Result<CsvData> {
    let ycol = table
        .column_index(response_column)
        .ok_or_else(|| Error::Schema(format!("response column {response_column:?} not found")))?;
    let mut y = Vec::with_capacity(table.rows.len());
    for (i, row) in table.rows.iter().enumerate() {
        match row[ycol] {
            Some(v) => y.push(v),
            None => {
                return Err(Error::MissingResponse {
                    column: response_column.to_string(),
                    row: i + 1,
                })
            }
        }
    }
    let feature_names: Vec<String> = table
        .headers
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != ycol)
        .map(|(_, h)| h.clone())
        .collect();
    if feature_names.is_empty() {
        return Err(Error::Schema("no feature columns".into()));
    }
    let features = table.select(&feature_names)?;
    Ok(CsvData {
        feature_names,
        features,
        response: ResponseVector::new(y)?,
    })
}

pub fn read_csv(path: &Path, na_token: &str, response_column: &str) -> Result<CsvData> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let table = read_csv_table(file, na_token)?;
    split_response(&table, response_column)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn standardize_uses_observed_entries_only() {
        let x = ObservedMatrix::from_rows(&[vec![Some(2.0)], vec![Some(4.0)], vec![None]]).unwrap();
        let y = ResponseVector::new(vec![1.0, 3.0, 5.0]).unwrap();
        let (xs, ys, t) = standardize(&x, &y).unwrap();
        let r2 = 2f64.sqrt();
        assert!(close(t.col_means[0], 3.0, 1e-15));
        assert!(close(t.col_scales[0], r2, 1e-15));
        assert!(close(xs.get(0, 0).unwrap(), -1.0 / r2, 1e-15));
        assert!(close(xs.get(1, 0).unwrap(), 1.0 / r2, 1e-15));
        assert_eq!(xs.get(2, 0), None);
        assert_eq!(ys.values(), &[-2.0, 0.0, 2.0]);
        assert_eq!(t.y_mean, 3.0);
    }

    #[test]
    fn standardize_is_idempotent_on_standardized_input() {
        let x = ObservedMatrix::fully_observed(vec![1.0, 0.3, -1.0, 2.0, 0.0, -0.7, 4.0, 1.5], 4, 2)
            .unwrap();
        let y = ResponseVector::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (xs, ys, _) = standardize(&x, &y).unwrap();
        let (xss, yss, t2) = standardize(&xs, &ys).unwrap();
        for (a, b) in xs.raw_values().iter().zip(xss.raw_values()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in ys.values().iter().zip(yss.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(t2.col_scales.iter().all(|s| (s - 1.0).abs() < 1e-12));
    }

    #[test]
    fn all_missing_column_is_degenerate() {
        let x = ObservedMatrix::from_rows(&[vec![Some(1.0), None], vec![Some(2.0), None]]).unwrap();
        let y = ResponseVector::new(vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            standardize(&x, &y),
            Err(Error::DegenerateColumn { column: 1, observed: 0, .. })
        ));
    }

    #[test]
    fn constant_column_is_rejected() {
        let x = ObservedMatrix::from_rows(&[vec![Some(5.0)], vec![Some(5.0)], vec![None]]).unwrap();
        let y = ResponseVector::new(vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(standardize(&x, &y).unwrap_err(), Error::ConstantColumn { column: 0 });
    }

    #[test]
    fn apply_then_invert_recovers_observed_entries() {
        let x = ObservedMatrix::from_rows(&[
            vec![Some(1e3), None, Some(-2.5)],
            vec![Some(1e3 + 1.0), Some(7.0), None],
            vec![None, Some(9.5), Some(3.25)],
            vec![Some(999.0), Some(8.0), Some(0.0)],
        ])
        .unwrap();
        let y = ResponseVector::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (xs, _, t) = standardize(&x, &y).unwrap();
        let back = t.invert(&xs).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                match (x.get(i, j), back.get(i, j)) {
                    (Some(a), Some(b)) => assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0)),
                    (None, None) => {}
                    _ => panic!("mask changed"),
                }
            }
        }
    }

    #[test]
    fn csv_na_token_becomes_missing() {
        let text = "a,b,y\n1,NA,3\n2, 5 ,4\n";
        let table = read_csv_table(text.as_bytes(), "NA").unwrap();
        let data = split_response(&table, "y").unwrap();
        assert_eq!(data.feature_names, vec!["a", "b"]);
        assert_eq!(data.features.get(0, 1), None);
        assert_eq!(data.features.get(1, 1), Some(5.0));
        assert_eq!(data.response.values(), &[3.0, 4.0]);
    }

    #[test]
    fn csv_without_missing_is_fully_observed() {
        let text = "a,y\n1,2\n3,4\n5,6\n";
        let data = split_response(&read_csv_table(text.as_bytes(), "NA").unwrap(), "y").unwrap();
        assert!(data.features.is_complete());
        assert_eq!(data.features.n_rows(), 3);
        assert_eq!(data.features.n_cols(), 1);
    }

    #[test]
    fn csv_bad_cell_reports_coordinates() {
        let text = "a,b,y\n1,2,3\n4,abc,6\n";
        match read_csv_table(text.as_bytes(), "NA") {
            Err(Error::Parse { row, column, value }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "b");
                assert_eq!(value, "abc");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_missing_response_is_rejected() {
        let text = "a,y\n1,NA\n2,3\n";
        let table = read_csv_table(text.as_bytes(), "NA").unwrap();
        assert!(matches!(
            split_response(&table, "y"),
            Err(Error::MissingResponse { row: 1, .. })
        ));
    }

    #[test]
    fn custom_na_token() {
        let text = "a,y\n?,1\n2,3\n";
        let table = read_csv_table(text.as_bytes(), "?").unwrap();
        assert_eq!(table.rows[0][0], None);
        assert!(read_csv_table("a,y\nNA,4\n".as_bytes(), "?").is_err());
    }
}
