//! Interpolation index selection: DEIM, QDEIM, GappyPOD+E oversampling, stencil adjacency.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::PivotedQr;

/// Column, row, and adjacent-row indices used by one step.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SelectionIndices {
    pub s: Vec<usize>,
    pub p: Vec<usize>,
    pub p_a: Vec<usize>,
    pub e: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Selector {
    #[default]
    Deim,
    Qdeim,
}

impl Selector {
    pub fn select(self, b: &DMatrix<f64>) -> Result<Vec<usize>> {
        match self {
            Selector::Deim => deim(b),
            Selector::Qdeim => qdeim(b),
        }
    }
}

fn argmax_abs(v: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, -1.0);
    for (i, x) in v.enumerate() {
        if x.abs() > best.1 {
            best = (i, x.abs());
        }
    }
    best
}

/// Greedy DEIM selection; ties go to the lowest index.
pub fn deim(b: &DMatrix<f64>) -> Result<Vec<usize>> {
    let (m, k) = b.shape();
    if k == 0 || k > m {
        return Err(Error::InvalidInput(format!("deim needs 1 <= k <= m (m={m}, k={k})")));
    }
    let (first, mag) = argmax_abs(b.column(0).iter().copied());
    if !(mag > 0.0) {
        return Err(Error::Selection { column: 0 });
    }
    let mut p = vec![first];
    let mut res = vec![0.0; m];
    for j in 1..k {
        let bp = DMatrix::from_fn(j, j, |a, c| b[(p[a], c)]);
        let rhs = DMatrix::from_fn(j, 1, |a, _| b[(p[a], j)]);
        let coef = bp.lu().solve(&rhs).ok_or(Error::Selection { column: j })?;
        if !coef.iter().all(|c| c.is_finite()) {
            return Err(Error::Selection { column: j });
        }
        for (i, r) in res.iter_mut().enumerate() {
            let mut s = b[(i, j)];
            for c in 0..j {
                s -= b[(i, c)] * coef[c];
            }
            *r = s;
        }
        for &pi in &p {
            res[pi] = 0.0;
        }
        let (idx, mag) = argmax_abs(res.iter().copied());
        if !(mag > 0.0) {
            return Err(Error::Selection { column: j });
        }
        p.push(idx);
    }
    Ok(p)
}

/// QDEIM: the first `k` pivots of a column-pivoted QR of `Bᵀ`.
pub fn qdeim(b: &DMatrix<f64>) -> Result<Vec<usize>> {
    let (m, k) = b.shape();
    if k == 0 || k > m {
        return Err(Error::InvalidInput(format!("qdeim needs 1 <= k <= m (m={m}, k={k})")));
    }
    let qr = PivotedQr::with_tolerance(b.transpose(), 0.0);
    let diag = qr.r_diag();
    if diag.len() < k {
        return Err(Error::Selection { column: diag.len() });
    }
    if let Some(j) = diag.iter().position(|d| *d == 0.0) {
        return Err(Error::Selection { column: j });
    }
    Ok(qr.permutation()[..k].to_vec())
}

/// Extends `base` by `e` rows chosen with the GappyPOD+E greedy criterion.
///
/// Each new row maximizes the growth of the smallest singular value of
/// `B(P,:)`; ties go to the lowest index.
pub fn oversample(b: &DMatrix<f64>, base: &[usize], e: usize) -> Result<Vec<usize>> {
    let (m, k) = b.shape();
    if base.len() + e > m {
        return Err(Error::InvalidInput(format!("cannot pick {} rows from {m}", base.len() + e)));
    }
    if base.iter().any(|&i| i >= m) {
        return Err(Error::InvalidInput("base index out of range".into()));
    }
    let mut p = base.to_vec();
    if e == 0 {
        return Ok(p);
    }
    let mut taken = vec![false; m];
    for &i in base {
        taken[i] = true;
    }
    let row_norm2: Vec<f64> = (0..m).map(|i| b.row(i).norm_squared()).collect();
    for _ in 0..e {
        let score: Vec<f64> = if k == 1 || p.len() < k {
            row_norm2.clone()
        } else {
            let bp = DMatrix::from_fn(p.len(), k, |a, c| b[(p[a], c)]);
            let svd = bp.svd(false, true);
            let sv = svd.singular_values;
            let vt = svd.v_t.expect("right vectors requested");
            let mut order: Vec<usize> = (0..sv.len()).collect();
            order.sort_by(|&a, &c| sv[c].total_cmp(&sv[a]));
            let smin = sv[order[k - 1]];
            let g = sv[order[k - 2]].powi(2) - smin * smin;
            let w = vt.row(order[k - 1]).into_owned();
            (0..m)
                .map(|i| {
                    let proj = (0..k).map(|c| w[c] * b[(i, c)]).sum::<f64>();
                    let a = g + row_norm2[i];
                    let disc = (a * a - 4.0 * g * proj * proj).max(0.0);
                    a - disc.sqrt()
                })
                .collect()
        };
        let mut best: Option<usize> = None;
        for i in 0..m {
            if taken[i] {
                continue;
            }
            if best.is_none_or(|bi| score[i] > score[bi]) {
                best = Some(i);
            }
        }
        let i = best.ok_or_else(|| Error::InvalidInput("no rows left to oversample".into()))?;
        taken[i] = true;
        p.push(i);
    }
    Ok(p)
}

/// `(∪_{i∈p} stencil(i)) \ p`, sorted and duplicate-free.
pub fn find_adjacent<F>(p: &[usize], n: usize, mut stencil: F) -> Result<Vec<usize>>
where
    F: FnMut(usize, &mut Vec<usize>),
{
    let mut in_p = vec![false; n];
    for &i in p {
        if i >= n {
            return Err(Error::InvalidInput(format!("row {i} out of range")));
        }
        in_p[i] = true;
    }
    let mut out = Vec::new();
    let mut nb = Vec::new();
    for &i in p {
        nb.clear();
        stencil(i, &mut nb);
        for &j in &nb {
            if j >= n {
                return Err(Error::ModelDefinition(format!("stencil of row {i} points to {j} >= {n}")));
            }
            if !in_p[j] {
                out.push(j);
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}
