//! Dense linear algebra for second-moment valuation.
//!
//! Everything here is a pure function of its inputs. Sample matrices are
//! stored row-major with samples as rows and features as columns.

mod jacobi;

pub use jacobi::{sym_eig, EigenSpectrum, MAX_SWEEPS, OFF_DIAGONAL_RTOL};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `‖u‖ - 1` accepted for query directions.
pub const UNIT_NORM_TOL: f64 = 1e-8;

/// An `n × d` matrix of finite samples (rows) by features (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidData(format!(
                "matrix must have at least one row and one column, got {rows}x{cols}"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::InvalidData(format!(
                "expected {} values for a {rows}x{cols} matrix, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite entry at row {}, column {}",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::InvalidData(format!(
                    "row {i} has {} columns, expected {cols}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, values)
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.iter_rows().map(<[f64]>::to_vec).collect()
    }

    /// Appends the columns of `other` to the right of `self`.
    pub fn hstack(&self, other: &DataMatrix) -> Result<DataMatrix> {
        if self.rows != other.rows {
            return Err(Error::Dimension(format!(
                "cannot stack {} rows next to {} rows",
                self.rows, other.rows
            )));
        }
        let cols = self.cols + other.cols;
        let mut values = Vec::with_capacity(self.rows * cols);
        for (a, b) in self.iter_rows().zip(other.iter_rows()) {
            values.extend_from_slice(a);
            values.extend_from_slice(b);
        }
        DataMatrix::new(self.rows, cols, values)
    }

    fn column_means(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for row in self.iter_rows() {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        let n = self.rows as f64;
        sums.into_iter().map(|s| s / n).collect()
    }
}

/// Subtracts each column's mean from that column.
pub fn center_columns(x: &DataMatrix) -> Result<DataMatrix> {
    if x.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("matrix contains non-finite entries".into()));
    }
    let means = x.column_means();
    let values = x
        .iter_rows()
        .flat_map(|row| row.iter().zip(&means).map(|(v, m)| v - m))
        .collect();
    DataMatrix::new(x.rows, x.cols, values)
}

/// Divides every entry by the largest (population) column standard deviation
/// of `x`, returning the scaled matrix and the factor used.
///
/// A single global factor keeps relative variances between features intact.
/// An all-constant matrix is returned unchanged with factor 1.
pub fn scale_by_max_std(x: &DataMatrix) -> Result<(DataMatrix, f64)> {
    let means = x.column_means();
    let mut sq = vec![0.0; x.cols];
    for row in x.iter_rows() {
        for ((s, v), m) in sq.iter_mut().zip(row).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    let n = x.rows as f64;
    let factor = sq.iter().map(|s| (s / n).sqrt()).fold(0.0, f64::max);
    if factor == 0.0 {
        return Ok((x.clone(), 1.0));
    }
    let values = x.values.iter().map(|v| v / factor).collect();
    Ok((DataMatrix::new(x.rows, x.cols, values)?, factor))
}

/// A symmetric `d × d` second-moment matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceMatrix {
    dim: usize,
    values: Vec<f64>,
}

impl CovarianceMatrix {
    /// Builds a covariance matrix from row-major values, symmetrizing as
    /// `(C + Cᵀ) / 2`.
    pub fn from_values(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.len() != dim * dim {
            return Err(Error::InvalidCovariance(format!(
                "expected {} values for a {dim}x{dim} matrix, got {}",
                dim * dim,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCovariance("non-finite entry".into()));
        }
        let mut sym = values;
        for i in 0..dim {
            for j in (i + 1)..dim {
                let avg = 0.5 * (sym[i * dim + j] + sym[j * dim + i]);
                sym[i * dim + j] = avg;
                sym[j * dim + i] = avg;
            }
        }
        Ok(Self { dim, values: sym })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.len();
        let mut values = Vec::with_capacity(dim * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::InvalidCovariance(format!(
                    "covariance must be square, found a row of length {} in a {dim}-row matrix",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::from_values(dim, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.dim + col]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks_exact(self.dim).map(<[f64]>::to_vec).collect()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn mul_vec(&self, u: &[f64]) -> Vec<f64> {
        self.values
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(u).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// `(1/n) XᵀX` for a matrix the caller has already centered.
pub fn covariance(x: &DataMatrix) -> CovarianceMatrix {
    let d = x.cols;
    let mut acc = vec![0.0; d * d];
    for row in x.iter_rows() {
        for i in 0..d {
            let ri = row[i];
            if ri == 0.0 {
                continue;
            }
            for j in i..d {
                acc[i * d + j] += ri * row[j];
            }
        }
    }
    let n = x.rows as f64;
    for i in 0..d {
        for j in i..d {
            let v = acc[i * d + j] / n;
            acc[i * d + j] = v;
            acc[j * d + i] = v;
        }
    }
    CovarianceMatrix { dim: d, values: acc }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Variance of the data behind `c` along the unit direction `u`, measured
/// as `‖C·u‖`.
///
/// When `u` is an eigenvector of `c` this is the matching eigenvalue.
pub fn projected_variance(c: &CovarianceMatrix, u: &[f64]) -> Result<f64> {
    if u.len() != c.dim {
        return Err(Error::Dimension(format!(
            "direction has length {}, covariance is {}x{}",
            u.len(),
            c.dim,
            c.dim
        )));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidDirection("direction has non-finite entries".into()));
    }
    let len = norm(u);
    if (len - 1.0).abs() > UNIT_NORM_TOL {
        return Err(Error::InvalidDirection(format!(
            "direction norm is {len}, expected 1"
        )));
    }
    Ok(norm(&c.mul_vec(u)))
}
