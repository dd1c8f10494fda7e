//! Circular (cyclic) unfolding and folding.
//!
//! For mode `k` and shift `d`, the unfolding groups the `d` cyclically
//! consecutive modes ending at `k` into rows and the remaining `N - d`
//! modes (starting at `k + 1`, wrapping around) into columns. Within each
//! group the first listed mode varies fastest, matching the tensor
//! linearization. Modes are zero-based throughout the library.

use crate::error::{Error, Result};

use super::shape::for_each_strided;
use super::{DenseTensor, Matrix, Shape, SparseTensor};

/// Mode (zero-based) and shift of a circular unfolding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UnfoldSpec {
    pub mode: usize,
    pub shift: usize,
}

impl UnfoldSpec {
    pub fn new(mode: usize, shift: usize) -> Self {
        UnfoldSpec { mode, shift }
    }

    pub fn validate(&self, shape: &Shape) -> Result<()> {
        let n = shape.order();
        if self.mode >= n {
            return Err(Error::InvalidSpec(format!("mode {} out of range for order {n}", self.mode)));
        }
        if self.shift == 0 || self.shift >= n {
            return Err(Error::InvalidSpec(format!("shift {} outside 1..={}", self.shift, n - 1)));
        }
        Ok(())
    }

    /// First row mode, `a = k - d + 1 (mod N)`.
    pub fn first_row_mode(&self, order: usize) -> usize {
        (self.mode + order + 1 - self.shift) % order
    }

    pub fn row_modes(&self, order: usize) -> Vec<usize> {
        let a = self.first_row_mode(order);
        (0..self.shift).map(|j| (a + j) % order).collect()
    }

    pub fn col_modes(&self, order: usize) -> Vec<usize> {
        (0..order - self.shift).map(|j| (self.mode + 1 + j) % order).collect()
    }

    /// `(rows, cols)` of the unfolding for `shape`.
    pub fn dims(&self, shape: &Shape) -> Result<(usize, usize)> {
        self.validate(shape)?;
        let n = shape.order();
        let rows = self.row_modes(n).iter().map(|&m| shape.dim(m)).product();
        let cols = self.col_modes(n).iter().map(|&m| shape.dim(m)).product();
        Ok((rows, cols))
    }

    /// Smaller side of the unfolding; the rank cap of any mode component.
    pub fn min_dim(&self, shape: &Shape) -> Result<usize> {
        let (r, c) = self.dims(shape)?;
        Ok(r.min(c))
    }

    /// Per tensor mode, the stride into the column-major unfolded buffer.
    fn strides(&self, shape: &Shape) -> Result<(usize, usize, Vec<usize>)> {
        let (rows, cols) = self.dims(shape)?;
        let n = shape.order();
        let mut strides = vec![0usize; n];
        let mut s = 1;
        for m in self.row_modes(n) {
            strides[m] = s;
            s *= shape.dim(m);
        }
        let mut s = rows;
        for m in self.col_modes(n) {
            strides[m] = s;
            s *= shape.dim(m);
        }
        Ok((rows, cols, strides))
    }
}

/// The circular unfolding `X_(k,d)`.
pub fn unfold(x: &DenseTensor, spec: UnfoldSpec) -> Result<Matrix> {
    let (rows, cols, strides) = spec.strides(x.shape())?;
    let mut out = vec![0.0; rows * cols];
    let xv = x.values();
    for_each_strided(x.shape().dims(), &strides, |lin, off| out[off] = xv[lin]);
    Matrix::from_col_major(rows, cols, out)
}

/// Unfolding of the zero-filled dense embedding of `t`.
pub fn unfold_sparse(t: &SparseTensor, spec: UnfoldSpec) -> Result<Matrix> {
    let (rows, cols, strides) = spec.strides(t.shape())?;
    let mut out = vec![0.0; rows * cols];
    for (index, v) in t.iter() {
        let off: usize = index.iter().zip(&strides).map(|(i, s)| i * s).sum();
        out[off] = v;
    }
    Matrix::from_col_major(rows, cols, out)
}

/// Tensors that can produce their circular unfoldings.
pub trait Unfoldable {
    fn shape(&self) -> &Shape;
    fn unfolding(&self, spec: UnfoldSpec) -> Result<Matrix>;
}

impl Unfoldable for DenseTensor {
    fn shape(&self) -> &Shape {
        DenseTensor::shape(self)
    }

    fn unfolding(&self, spec: UnfoldSpec) -> Result<Matrix> {
        unfold(self, spec)
    }
}

impl Unfoldable for SparseTensor {
    fn shape(&self) -> &Shape {
        SparseTensor::shape(self)
    }

    fn unfolding(&self, spec: UnfoldSpec) -> Result<Matrix> {
        unfold_sparse(self, spec)
    }
}

/// Inverse of [`unfold`]: rebuilds the tensor of `shape` from its
/// `(k, d)` unfolding.
pub fn fold(m: &Matrix, spec: UnfoldSpec, shape: &Shape) -> Result<DenseTensor> {
    let (rows, cols, strides) = spec.strides(shape)?;
    if m.rows() != rows || m.cols() != cols {
        return Err(Error::InvalidSpec(format!(
            "{}x{} matrix cannot fold into {shape} along mode {} shift {} (needs {rows}x{cols})",
            m.rows(),
            m.cols(),
            spec.mode,
            spec.shift
        )));
    }
    let mut out = vec![0.0; shape.len()];
    let mv = m.values();
    for_each_strided(shape.dims(), &strides, |lin, off| out[lin] = mv[off]);
    DenseTensor::from_vec(shape.clone(), out)
}

/// `x += alpha * fold(m)` without materializing the folded tensor.
pub fn fold_add(x: &mut DenseTensor, alpha: f64, m: &Matrix, spec: UnfoldSpec) -> Result<()> {
    let shape = x.shape().clone();
    let (rows, cols, strides) = spec.strides(&shape)?;
    if m.rows() != rows || m.cols() != cols {
        return Err(Error::InvalidSpec(format!(
            "{}x{} matrix does not match the {rows}x{cols} unfolding",
            m.rows(),
            m.cols()
        )));
    }
    let mv = m.values();
    let xv = x.values_mut();
    for_each_strided(shape.dims(), &strides, |lin, off| xv[lin] += alpha * mv[off]);
    Ok(())
}
