//! Tensor storage, observation masks and circular unfoldings.

mod coo;
mod dense;
mod matrix;
mod shape;
mod sparse;
mod unfold;

pub use coo::{read_coo, read_coo_file, write_coo, write_coo_file};
pub use dense::{inner, DenseTensor};
pub use matrix::Matrix;
pub use shape::Shape;
pub use sparse::{masked_residual, SparseTensor};
pub use unfold::{fold, fold_add, unfold, unfold_sparse, UnfoldSpec, Unfoldable};
