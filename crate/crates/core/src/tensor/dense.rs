use crate::error::{Error, Result};

use super::Shape;

/// Dense N-order tensor, first index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Shape,
    values: Vec<f64>,
}

impl DenseTensor {
    pub fn zeros(shape: Shape) -> Self {
        let values = vec![0.0; shape.len()];
        DenseTensor { shape, values }
    }

    pub fn from_vec(shape: Shape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::InvalidShape(format!(
                "{} values for shape {shape} ({} elements)",
                values.len(),
                shape.len()
            )));
        }
        Ok(DenseTensor { shape, values })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let values = (0..shape.len()).map(|lin| f(&shape.multi_index(lin))).collect();
        DenseTensor { shape, values }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.values[self.shape.linear_index(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let lin = self.shape.linear_index(index);
        self.values[lin] = value;
    }

    /// `<self, other>`, the sum of elementwise products.
    pub fn inner(&self, other: &DenseTensor) -> Result<f64> {
        self.shape.check_same(&other.shape)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum())
    }

    pub fn fro_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &DenseTensor) -> Result<()> {
        self.shape.check_same(&other.shape)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// `<x, y>` for equally shaped tensors.
pub fn inner(x: &DenseTensor, y: &DenseTensor) -> Result<f64> {
    x.inner(y)
}
