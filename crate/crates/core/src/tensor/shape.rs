use std::fmt;

use crate::error::{Error, Result};

/// Dimensions of an N-order tensor, N >= 3.
///
/// Tensors are linearized with the first index varying fastest, so the
/// flat offset of `(i_1, .., i_N)` is `i_1 + I_1 * (i_2 + I_2 * (..))`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Shape {
    dims: Vec<usize>,
}

impl Shape {
    pub const MIN_ORDER: usize = 3;

    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.len() < Self::MIN_ORDER {
            return Err(Error::InvalidShape(format!(
                "order {} is below the minimum of {}",
                dims.len(),
                Self::MIN_ORDER
            )));
        }
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidShape(format!("dimension {} is zero", pos + 1)));
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::InvalidShape("element count overflows".into()))?;
        Ok(Shape { dims })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn dim(&self, mode: usize) -> usize {
        self.dims[mode]
    }

    /// Total number of elements.
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, index: &[usize]) -> bool {
        index.len() == self.dims.len() && index.iter().zip(&self.dims).all(|(&i, &d)| i < d)
    }

    /// Flat offset of a zero-based multi-index. The index must be in range.
    pub fn linear_index(&self, index: &[usize]) -> usize {
        debug_assert!(self.contains(index));
        let mut offset = 0;
        for (&i, &d) in index.iter().zip(&self.dims).rev() {
            offset = offset * d + i;
        }
        offset
    }

    pub fn multi_index(&self, mut linear: usize) -> Vec<usize> {
        let mut index = Vec::with_capacity(self.dims.len());
        for &d in &self.dims {
            index.push(linear % d);
            linear /= d;
        }
        index
    }

    pub(crate) fn check_same(&self, other: &Shape) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: self.dims.clone(),
                found: other.dims.clone(),
            })
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, d) in self.dims.iter().enumerate() {
            if n > 0 {
                f.write_str("x")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let dims = s
            .split('x')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidShape(format!("bad dimension {p:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Shape::new(dims)
    }
}

/// Walks every element of a tensor in linearization order, yielding the
/// element's flat offset and `sum_n i_n * strides[n]`.
pub(crate) fn for_each_strided(dims: &[usize], strides: &[usize], mut f: impl FnMut(usize, usize)) {
    let order = dims.len();
    let mut index = vec![0usize; order];
    let mut offset = 0usize;
    let inner = dims[0];
    let inner_stride = strides[0];
    let total: usize = dims.iter().product();
    let mut linear = 0usize;
    while linear < total {
        let mut o = offset;
        for l in linear..linear + inner {
            f(l, o);
            o += inner_stride;
        }
        linear += inner;
        // carry into the outer modes
        let mut n = 1;
        while n < order {
            index[n] += 1;
            offset += strides[n];
            if index[n] < dims[n] {
                break;
            }
            offset -= strides[n] * dims[n];
            index[n] = 0;
            n += 1;
        }
    }
}
