//! Low-rank factored states, truncated SVD, and the QR-based stable CUR assembly.

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_finite, Error, Result};
use crate::linalg::{pinv_norm, select_rows, PivotedQr};

/// Solution matrix in SVD-like form `U Σ Yᵀ` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankState {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub y: DMatrix<f64>,
    pub t: f64,
}

impl LowRankState {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn s(&self) -> usize {
        self.y.nrows()
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    /// Dense `U Σ Yᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let us = self.scaled_u();
        us * self.y.transpose()
    }

    /// `U Σ Y(cols,:)ᵀ`, an `n × |cols|` block.
    pub fn columns(&self, cols: &[usize]) -> DMatrix<f64> {
        let ys = select_rows(&self.y, cols);
        self.scaled_u() * ys.transpose()
    }

    /// `U(rows,:) Σ Yᵀ`, a `|rows| × s` block.
    pub fn rows(&self, rows: &[usize]) -> DMatrix<f64> {
        let mut ur = select_rows(&self.u, rows);
        for (j, s) in self.sigma.iter().enumerate() {
            ur.column_mut(j).scale_mut(*s);
        }
        ur * self.y.transpose()
    }

    /// Frobenius norm of the represented matrix.
    pub fn norm(&self) -> f64 {
        self.sigma.norm()
    }

    /// Rank proxy `σ_r / (Σ σ_i²)^{1/2}`.
    pub fn error_proxy(&self) -> f64 {
        let nrm = self.norm();
        if nrm == 0.0 {
            return 0.0;
        }
        self.sigma[self.rank() - 1] / nrm
    }

    fn scaled_u(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TruncationMode {
    /// Keep `σ_i > ε_m · max(n, m) · σ_1`.
    Penrose,
    FixedRank(usize),
    /// Keep `σ_i > ε_u · ‖σ‖₂`; `ε_l` is carried for rank control.
    ThresholdPair {
        lower: f64,
        upper: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationRule {
    pub machine_eps: f64,
    pub mode: TruncationMode,
}

impl TruncationRule {
    pub fn penrose() -> Self {
        TruncationRule { machine_eps: f64::EPSILON, mode: TruncationMode::Penrose }
    }

    pub fn fixed_rank(r: usize) -> Self {
        TruncationRule { machine_eps: f64::EPSILON, mode: TruncationMode::FixedRank(r) }
    }

    pub fn threshold_pair(lower: f64, upper: f64) -> Self {
        TruncationRule { machine_eps: f64::EPSILON, mode: TruncationMode::ThresholdPair { lower, upper } }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.machine_eps > 0.0) {
            return Err(Error::InvalidInput("machine_eps must be positive".into()));
        }
        match self.mode {
            TruncationMode::FixedRank(0) => Err(Error::InvalidInput("fixed rank must be at least 1".into())),
            TruncationMode::ThresholdPair { lower, upper } if !(lower > 0.0 && lower < upper) => {
                Err(Error::InvalidInput(format!("threshold pair needs 0 < {lower} < {upper}")))
            }
            _ => Ok(()),
        }
    }

    /// Rank retained for the given descending singular values of an `n × m` matrix.
    pub fn rank_for(&self, sigma: &[f64], n: usize, m: usize) -> Result<usize> {
        self.validate()?;
        let s1 = sigma.first().copied().unwrap_or(0.0);
        let k = match self.mode {
            TruncationMode::Penrose => {
                let tol = self.machine_eps * n.max(m) as f64 * s1;
                sigma.iter().filter(|&&s| s > tol).count()
            }
            TruncationMode::FixedRank(r) => {
                if r > sigma.len() {
                    return Err(Error::InvalidInput(format!("rank {r} exceeds min(n, m) = {}", sigma.len())));
                }
                r
            }
            TruncationMode::ThresholdPair { upper, .. } => {
                let nrm = sigma.iter().map(|s| s * s).sum::<f64>().sqrt();
                sigma.iter().filter(|&&s| s > upper * nrm).count()
            }
        };
        Ok(k.max(1))
    }
}

/// Truncated SVD under `rule`, returned as a state at `t = 0`.
///
/// Left singular vectors have their first non-negligible entry positive.
/// An all-zero input yields rank one with a zero singular value.
pub fn truncated_svd(m: &DMatrix<f64>, rule: &TruncationRule) -> Result<LowRankState> {
    let (n, cols) = m.shape();
    if n == 0 || cols == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    ensure_finite(m.as_slice(), "truncated_svd input")?;
    let svd = m.clone().svd(true, true);
    let u_full = svd.u.expect("left vectors requested");
    let vt_full = svd.v_t.expect("right vectors requested");
    let sv = svd.singular_values;
    if sv[0] == 0.0 {
        log::warn!("truncated_svd: all-zero {n}x{cols} input, returning rank 1 with zero singular value");
        let mut u = DMatrix::zeros(n, 1);
        u[(0, 0)] = 1.0;
        let mut y = DMatrix::zeros(cols, 1);
        y[(0, 0)] = 1.0;
        return Ok(LowRankState { u, sigma: DVector::zeros(1), y, t: 0.0 });
    }
    let k = rule.rank_for(sv.as_slice(), n, cols)?;
    let mut u = u_full.columns(0, k).into_owned();
    let mut y = vt_full.rows(0, k).transpose();
    let sigma = DVector::from_iterator(k, sv.iter().take(k).copied());
    fix_signs(&mut u, &mut y);
    Ok(LowRankState { u, sigma, y, t: 0.0 })
}

/// All singular values, descending.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    m.clone().singular_values().as_slice().to_vec()
}

pub(crate) fn fix_signs(u: &mut DMatrix<f64>, y: &mut DMatrix<f64>) {
    for j in 0..u.ncols() {
        let col = u.column(j);
        let amax = col.amax();
        let first = col.iter().copied().find(|v| v.abs() > 1e-8 * amax).unwrap_or(0.0);
        if first < 0.0 {
            u.column_mut(j).neg_mut();
            y.column_mut(j).neg_mut();
        }
    }
}

/// Stable CUR assembly from sampled columns `V(:,s)` and sampled rows `V(p,:)`.
///
/// Computes `Q R = V(:,s)`, `Z = Q(p,:)⁺ V(p,:)` by a pivoted orthogonal
/// least-squares solve, then `U = Q U_Z` from the SVD of `Z`.
pub fn stable_cur(cols: &DMatrix<f64>, rows: &DMatrix<f64>, p: &[usize]) -> Result<LowRankState> {
    let (n, r) = cols.shape();
    let (rp, s) = rows.shape();
    if r == 0 || rp != p.len() || rp < r || s < r {
        return Err(Error::InvalidInput(format!(
            "stable_cur needs r' >= r and s >= r (n={n}, r={r}, r'={rp}, |p|={}, s={s})",
            p.len()
        )));
    }
    if p.iter().any(|&i| i >= n) {
        return Err(Error::InvalidInput("row index out of range".into()));
    }
    ensure_finite(cols.as_slice(), "stable_cur columns")?;
    ensure_finite(rows.as_slice(), "stable_cur rows")?;
    let qr = cols.clone().qr();
    let rmat = qr.r();
    if (0..r).any(|j| rmat[(j, j)] == 0.0 || !rmat[(j, j)].is_finite()) {
        return Err(Error::RankDeficient { context: "stable_cur columns".into() });
    }
    let q = qr.q();
    let qp = select_rows(&q, p);
    let fact = PivotedQr::new(qp.clone());
    if fact.rank() < r {
        return Err(Error::Conditioning { context: "stable_cur Q(p,:)".into(), pinv_norm: pinv_norm(&qp) });
    }
    let z = fact.solve(rows);
    let svd = z.svd(true, true);
    let uz = svd.u.expect("left vectors requested");
    let vt = svd.v_t.expect("right vectors requested");
    let mut u = &q * uz.columns(0, r);
    let mut y = vt.rows(0, r).transpose();
    let sigma = DVector::from_iterator(r, svd.singular_values.iter().take(r).copied());
    fix_signs(&mut u, &mut y);
    Ok(LowRankState { u, sigma, y, t: 0.0 })
}

/// DEIM-CUR amplification constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Amplification {
    pub eta_r: f64,
    pub eta_c: f64,
    pub c: f64,
}

/// `η_r = ‖U(p,:)⁺‖₂`, `η_c = ‖Y(s,:)⁺‖₂`, and `c = min{η_r(1+η_c), η_c(1+η_r)}`.
pub fn amplification_factor(u: &DMatrix<f64>, y: &DMatrix<f64>, p: &[usize], s: &[usize]) -> Result<Amplification> {
    let r = u.ncols();
    if y.ncols() != r || p.len() < r || s.len() < r {
        return Err(Error::InvalidInput("index sets must have at least r entries".into()));
    }
    if p.iter().any(|&i| i >= u.nrows()) || s.iter().any(|&i| i >= y.nrows()) {
        return Err(Error::InvalidInput("index out of range".into()));
    }
    let eta_r = pinv_norm(&select_rows(u, p));
    let eta_c = pinv_norm(&select_rows(y, s));
    let limit = 1.0 / f64::EPSILON;
    if !(eta_r < limit) {
        return Err(Error::Conditioning { context: "U(p,:)".into(), pinv_norm: eta_r });
    }
    if !(eta_c < limit) {
        return Err(Error::Conditioning { context: "Y(s,:)".into(), pinv_norm: eta_c });
    }
    let c = (eta_r * (1.0 + eta_c)).min(eta_c * (1.0 + eta_r));
    Ok(Amplification { eta_r, eta_c, c })
}
