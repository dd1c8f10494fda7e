use std::collections::HashSet;

use crate::error::{Error, Result};

use super::{DenseTensor, Shape};

/// Observed entries of an N-order tensor in coordinate form.
///
/// The entry set doubles as the indicator mask: an index is observed
/// exactly when it appears here. Indices are zero-based and pairwise
/// distinct.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTensor {
    shape: Shape,
    indices: Vec<usize>,
    values: Vec<f64>,
    linear: Vec<usize>,
}

impl SparseTensor {
    pub fn new<I>(shape: Shape, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<usize>, f64)>,
    {
        let order = shape.order();
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut linear = Vec::new();
        let mut seen = HashSet::new();
        for (index, value) in entries {
            if !shape.contains(&index) {
                return Err(Error::IndexOutOfRange { index, shape: shape.dims().to_vec() });
            }
            let lin = shape.linear_index(&index);
            if !seen.insert(lin) {
                return Err(Error::DuplicateIndex(index));
            }
            debug_assert_eq!(index.len(), order);
            indices.extend_from_slice(&index);
            values.push(value);
            linear.push(lin);
        }
        Ok(SparseTensor { shape, indices, values, linear })
    }

    /// Entries of `dense` at the given flat offsets.
    pub fn from_dense_at(dense: &DenseTensor, offsets: &[usize]) -> Result<Self> {
        let shape = dense.shape().clone();
        let entries = offsets.iter().map(|&lin| {
            let v = dense.values().get(lin).copied().unwrap_or(f64::NAN);
            (shape.multi_index(lin), v)
        });
        SparseTensor::new(shape.clone(), entries)
    }

    /// All nonzero entries of `dense`.
    pub fn from_dense_nonzeros(dense: &DenseTensor) -> Self {
        let shape = dense.shape().clone();
        let order = shape.order();
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut linear = Vec::new();
        for (lin, &v) in dense.values().iter().enumerate() {
            if v != 0.0 {
                indices.extend(shape.multi_index(lin));
                values.push(v);
                linear.push(lin);
            }
        }
        debug_assert_eq!(indices.len(), linear.len() * order);
        SparseTensor { shape, indices, values, linear }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    /// Number of observed entries, `|I|`.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Flat offsets of the observed entries in the dense linearization.
    pub fn linear_indices(&self) -> &[usize] {
        &self.linear
    }

    pub fn index(&self, entry: usize) -> &[usize] {
        let n = self.shape.order();
        &self.indices[entry * n..(entry + 1) * n]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[usize], f64)> + '_ {
        self.indices.chunks_exact(self.shape.order()).zip(self.values.iter().copied())
    }

    /// Same support, new values.
    pub fn with_values(&self, values: Vec<f64>) -> SparseTensor {
        assert_eq!(values.len(), self.values.len());
        SparseTensor {
            shape: self.shape.clone(),
            indices: self.indices.clone(),
            values,
            linear: self.linear.clone(),
        }
    }

    /// Dense embedding, zero off the support.
    pub fn to_dense(&self) -> DenseTensor {
        let mut out = DenseTensor::zeros(self.shape.clone());
        let vals = out.values_mut();
        for (&lin, &v) in self.linear.iter().zip(&self.values) {
            vals[lin] = v;
        }
        out
    }

    /// Values of `x` on this support.
    pub fn gather(&self, x: &DenseTensor) -> Result<Vec<f64>> {
        self.shape.check_same(x.shape())?;
        let xv = x.values();
        Ok(self.linear.iter().map(|&lin| xv[lin]).collect())
    }

    pub fn fro_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// `x(I) - t(I)` on the observed support of `t`: the gradient of
/// `0.5 * ||x(I) - t(I)||^2` with zeros elsewhere.
pub fn masked_residual(x: &DenseTensor, t: &SparseTensor) -> Result<SparseTensor> {
    let xv = t.gather(x)?;
    let values = xv.iter().zip(t.values()).map(|(a, b)| a - b).collect();
    Ok(t.with_values(values))
}
