use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense real matrix stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, values: vec![0.0; rows * cols] }
    }

    pub fn from_col_major(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::InvalidShape(format!(
                "{} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        Ok(Matrix { rows, cols, values })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for c in 0..cols {
            for r in 0..rows {
                values.push(f(r, c));
            }
        }
        Matrix { rows, cols, values }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Matrix::from_fn(n, n, |r, c| if r == c { diag[r] } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r + c * self.rows]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r + c * self.rows] = v;
    }

    pub fn column(&self, c: usize) -> &[f64] {
        &self.values[c * self.rows..(c + 1) * self.rows]
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn fro_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Appends the columns of `other` on the right.
    pub fn append_columns(&mut self, other: &Matrix) {
        assert_eq!(self.rows, other.rows, "row count mismatch in append_columns");
        self.values.extend_from_slice(&other.values);
        self.cols += other.cols;
    }

    /// `self * diag(weights) * other^T`.
    pub fn scaled_outer(&self, weights: &[f64], other: &Matrix) -> Matrix {
        assert_eq!(self.cols, weights.len());
        assert_eq!(other.cols, weights.len());
        let left = DMatrix::from_fn(self.rows, self.cols, |r, c| self.get(r, c) * weights[c]);
        let right = other.to_nalgebra();
        Matrix::from_nalgebra(&(left * right.transpose()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.rows, self.cols, &self.values)
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<f64>) -> Matrix {
        Matrix { rows: m.nrows(), cols: m.ncols(), values: m.as_slice().to_vec() }
    }
}
