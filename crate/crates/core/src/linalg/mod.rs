//! Dense helpers shared by the factorization, sampling and row-solve code.

mod krylov;
mod qr;
mod sparse;

pub use krylov::{gmres, GmresOutcome, LinearSolver, Preconditioner};
pub use qr::{lstsq, PivotedQr};
pub use sparse::{Csr, Ilu0};

use nalgebra::DMatrix;

/// Two-norm of the pseudoinverse, i.e. the reciprocal of the smallest singular value.
pub fn pinv_norm(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return f64::INFINITY;
    }
    let sv = a.clone().singular_values();
    let k = a.nrows().min(a.ncols());
    let smin = sv.iter().take(k).cloned().fold(f64::INFINITY, f64::min);
    if smin > 0.0 {
        1.0 / smin
    } else {
        f64::INFINITY
    }
}

/// Spectral norm via the largest singular value.
pub fn norm2(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().max()
}

/// Rows `idx` of `a`, in the order given.
pub fn select_rows(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), a.ncols(), |i, j| a[(idx[i], j)])
}

/// Columns `idx` of `a`, in the order given.
pub fn select_cols(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), idx.len(), |i, j| a[(i, idx[j])])
}

/// Largest entry of `|QᵀQ − I|`.
pub fn orthonormality_defect(q: &DMatrix<f64>) -> f64 {
    let g = q.transpose() * q;
    let mut worst = 0.0f64;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn nrm2(a: &[f64]) -> f64 {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let s: f64 = a.iter().map(|v| (v / scale) * (v / scale)).sum();
    scale * s.sqrt()
}

/// Column `j` of a column-major matrix as a slice.
pub(crate) fn col_slice(a: &DMatrix<f64>, j: usize) -> &[f64] {
    let n = a.nrows();
    &a.as_slice()[j * n..(j + 1) * n]
}
