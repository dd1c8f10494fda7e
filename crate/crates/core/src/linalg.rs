//! Truncated SVD and dominant singular values of unfolding matrices.
//!
//! Small or strongly rectangular matrices go through an exact route: a thin
//! QR of the long side followed by a dense SVD of the square factor. Large
//! matrices with a small requested rank use seeded randomized subspace
//! iteration, stopped when the top singular values change by less than
//! [`SUBSPACE_TOL`] relative, or after [`SUBSPACE_MAX_ITER`] sweeps.

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const SUBSPACE_TOL: f64 = 1e-10;
pub const SUBSPACE_MAX_ITER: usize = 1000;

/// Below this smaller dimension the exact route is always taken.
const RANDOMIZED_MIN_DIM: usize = 256;
const OVERSAMPLE: usize = 10;

/// Top singular triplets `m ~ U diag(sigma) V^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdTriplet {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

impl SvdTriplet {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        self.u.scaled_outer(&self.sigma, &self.v)
    }

    /// Keeps the leading `r` triplets.
    pub fn truncate(&mut self, r: usize) {
        let r = r.min(self.sigma.len());
        self.sigma.truncate(r);
        self.u = leading_columns(&self.u, r);
        self.v = leading_columns(&self.v, r);
    }
}

fn leading_columns(m: &Matrix, r: usize) -> Matrix {
    Matrix::from_col_major(m.rows(), r, m.values()[..m.rows() * r].to_vec())
        .expect("column prefix has consistent length")
}

fn check_finite(m: &Matrix) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite("matrix"))
    }
}

/// Top-`rank` singular triplets of `m`, singular values nonincreasing and
/// each `U` column's largest-magnitude entry positive.
pub fn truncated_svd(m: &Matrix, rank: usize, seed: u64) -> Result<SvdTriplet> {
    let max = m.rows().min(m.cols());
    if rank == 0 || rank > max {
        return Err(Error::RankOutOfRange { rank, max });
    }
    check_finite(m)?;
    let a = m.to_nalgebra();
    let (u, sigma, v) = if max >= RANDOMIZED_MIN_DIM && rank + OVERSAMPLE <= max / 4 {
        randomized_svd(&a, rank, seed)
    } else {
        exact_svd(&a)
    };
    let mut out = sorted_triplet(u, sigma, v, rank);
    fix_signs(&mut out);
    Ok(out)
}

/// Largest singular value of `m`.
pub fn dominant_sigma(m: &Matrix) -> Result<f64> {
    check_finite(m)?;
    let (p, q) = (m.rows(), m.cols());
    if p == 0 || q == 0 {
        return Ok(0.0);
    }
    if p.min(q) > 512 {
        return Ok(truncated_svd(m, 1, 0)?.sigma[0]);
    }
    let a = m.to_nalgebra();
    let gram = if p <= q { &a * a.transpose() } else { a.tr_mul(&a) };
    let lambda = SymmetricEigen::new(gram).eigenvalues.iter().fold(0.0f64, |acc, &l| acc.max(l));
    Ok(lambda.sqrt())
}

/// Full thin SVD; returns `(U, sigma, V)` unordered.
fn exact_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (p, q) = a.shape();
    if p >= 2 * q {
        let qr = a.clone().qr();
        let (qm, r) = (qr.q(), qr.r());
        let (ur, s, w) = square_svd(r);
        (qm * ur, s, w)
    } else if q >= 2 * p {
        let qr = a.transpose().qr();
        let (qm, r) = (qr.q(), qr.r());
        // a^T = Q R and R = Ur S W^T, so a = W S (Q Ur)^T
        let (ur, s, w) = square_svd(r);
        (w, s, qm * ur)
    } else {
        square_svd(a.clone())
    }
}

fn square_svd(a: DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let svd = SVD::try_new(a.clone(), true, true, f64::EPSILON, 0)
        .unwrap_or_else(|| SVD::new(a, true, true));
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested V^T").transpose();
    (u, svd.singular_values.iter().copied().collect(), v)
}

fn orthonormalize(y: DMatrix<f64>) -> DMatrix<f64> {
    y.qr().q()
}

/// Randomized range finder with subspace iteration.
fn randomized_svd(a: &DMatrix<f64>, rank: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (p, q) = a.shape();
    let k = (rank + OVERSAMPLE).min(p.min(q));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = DMatrix::from_fn(q, k, |_, _| StandardNormal.sample(&mut rng));
    let mut basis = orthonormalize(a * omega);
    let mut prev: Vec<f64> = vec![];
    let mut result = None;
    for _ in 0..SUBSPACE_MAX_ITER {
        // B = Q^T A is k x q; its SVD gives the Ritz triplets
        let b = basis.tr_mul(a);
        let (ub, s, vb) = exact_svd(&b);
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
        let top: Vec<f64> = order.iter().take(rank).map(|&i| s[i]).collect();
        let converged = !prev.is_empty()
            && top.iter().zip(&prev).all(|(a, b)| (a - b).abs() <= SUBSPACE_TOL * top[0].max(f64::MIN_POSITIVE));
        result = Some((&basis * ub, s, vb));
        if converged {
            break;
        }
        prev = top;
        let z = orthonormalize(a.tr_mul(&basis));
        basis = orthonormalize(a * z);
    }
    result.expect("at least one sweep")
}

fn sorted_triplet(u: DMatrix<f64>, sigma: Vec<f64>, v: DMatrix<f64>, rank: usize) -> SvdTriplet {
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));
    order.truncate(rank);
    let ucols = Matrix::from_fn(u.nrows(), rank, |r, c| u[(r, order[c])]);
    let vcols = Matrix::from_fn(v.nrows(), rank, |r, c| v[(r, order[c])]);
    SvdTriplet {
        u: ucols,
        sigma: order.iter().map(|&i| sigma[i].max(0.0)).collect(),
        v: vcols,
    }
}

fn fix_signs(t: &mut SvdTriplet) {
    let (p, q) = (t.u.rows(), t.v.rows());
    for c in 0..t.sigma.len() {
        let col = t.u.column(c);
        let mut best = 0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            for r in 0..p {
                let x = t.u.get(r, c);
                t.u.set(r, c, -x);
            }
            for r in 0..q {
                let x = t.v.get(r, c);
                t.v.set(r, c, -x);
            }
        }
    }
}
