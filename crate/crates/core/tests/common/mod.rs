//! Independent reference implementations used to check the library.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tcache::tensor::{DenseTensor, Shape};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &Shape, seed: u64) -> DenseTensor {
    let mut r = rng(seed);
    DenseTensor::from_fn(shape.clone(), |_| r.random_range(-1.0..1.0))
}

/// Row-major dense matrix used by the oracles.
pub type Dense = Vec<Vec<f64>>;

/// Singular values by one-sided Jacobi rotations, sorted descending.
pub fn jacobi_singular_values(a: &Dense) -> Vec<f64> {
    let rows = a.len();
    let cols = a[0].len();
    // work on the orientation with fewer columns
    let mut m: Dense = if cols <= rows {
        a.clone()
    } else {
        (0..cols).map(|j| (0..rows).map(|i| a[i][j]).collect()).collect()
    };
    let n = m[0].len();
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for row in &m {
                    alpha += row[p] * row[p];
                    beta += row[q] * row[q];
                    gamma += row[p] * row[q];
                }
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for row in m.iter_mut() {
                    let (xp, xq) = (row[p], row[q]);
                    row[p] = c * xp - s * xq;
                    row[q] = s * xp + c * xq;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..n).map(|j| m.iter().map(|row| row[j] * row[j]).sum::<f64>().sqrt()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Unfolding built directly from the definition: rows enumerate the `d`
/// modes ending at `k` (first listed fastest), columns the rest.
pub fn brute_unfold(x: &DenseTensor, k: usize, d: usize) -> Dense {
    let dims = x.shape().dims();
    let n = dims.len();
    let row_modes: Vec<usize> = (0..d).map(|j| (k + n * 2 + 1 - d + j) % n).collect();
    let col_modes: Vec<usize> = (0..n - d).map(|j| (k + 1 + j) % n).collect();
    let rows: usize = row_modes.iter().map(|&m| dims[m]).product();
    let cols: usize = col_modes.iter().map(|&m| dims[m]).product();
    let mut out = vec![vec![0.0; cols]; rows];
    let mut index = vec![0usize; n];
    for lin in 0..x.values().len() {
        let mut rem = lin;
        for (i, &dim) in index.iter_mut().zip(dims) {
            *i = rem % dim;
            rem /= dim;
        }
        let flat = |modes: &[usize]| {
            let mut acc = 0;
            let mut stride = 1;
            for &m in modes {
                acc += index[m] * stride;
                stride *= dims[m];
            }
            acc
        };
        out[flat(&row_modes)][flat(&col_modes)] = x.values()[lin];
    }
    out
}

/// Minimizer of `a g^2 - 2 b g` over the grid `0, step, ..., hi`.
pub fn grid_line_search(a: f64, b: f64, hi: f64, step: f64) -> f64 {
    let n = (hi / step).round() as usize;
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=n {
        let g = i as f64 * step;
        let v = a * g * g - 2.0 * b * g;
        if v < best.0 {
            best = (v, g);
        }
    }
    best.1
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Dense, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Equality-constrained least squares `min |Z c - y|^2 s.t. sum(c) = 1`
/// through the full KKT system. `z[r]` is one regression row.
pub fn kkt_sum_to_one(z: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let m = z[0].len();
    let mut a = vec![vec![0.0; m + 1]; m + 1];
    let mut b = vec![0.0; m + 1];
    for (row, &target) in z.iter().zip(y) {
        for i in 0..m {
            b[i] += row[i] * target;
            for j in 0..m {
                a[i][j] += row[i] * row[j];
            }
        }
    }
    for i in 0..m {
        a[i][m] = 1.0;
        a[m][i] = 1.0;
    }
    b[m] = 1.0;
    let sol = gauss_solve(a, b);
    sol[..m].to_vec()
}

/// Best achievable hit mass with `l` cached files: sum of the `l` largest.
pub fn best_hit_mass(mass: &[f64], l: usize) -> f64 {
    let mut sorted = mass.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted[..l].iter().sum()
}
