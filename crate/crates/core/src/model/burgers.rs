use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use super::{linspace, sample_rng, Boundary, Model, StateView};
use crate::error::{Error, Result};
use crate::linalg::Csr;

#[derive(Debug, Clone, PartialEq)]
pub struct BurgersParams {
    pub n: usize,
    pub s: usize,
    pub d: usize,
    pub nu: f64,
    pub sigma_x: f64,
    /// Correlation length of the squared-exponential kernel for the KL modes.
    pub corr_len: f64,
}

impl Default for BurgersParams {
    fn default() -> Self {
        BurgersParams { n: 512, s: 32, d: 4, nu: 0.01, sigma_x: 0.001, corr_len: 0.1 }
    }
}

/// How the KL modes were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KlMethod {
    /// Dense eigendecomposition of the kernel on the grid.
    Dense,
    /// Eigendecomposition on a coarse grid extended by the Nyström formula.
    Nystrom { coarse: usize },
}

/// Largest grid on which the kernel is decomposed densely.
pub const KL_DENSE_MAX: usize = 1024;
const KL_COARSE: usize = 512;

/// Viscous Burgers `v_t + v v_x = ν v_xx` on `[0, 1]` with frozen boundary rows.
#[derive(Debug, Clone)]
pub struct Burgers1d {
    pub params: BurgersParams,
    pub x: Vec<f64>,
    pub dx: f64,
    /// Columns are `√λ_i ψ_i` evaluated on the grid.
    pub kl_modes: DMatrix<f64>,
    pub kl_method: KlMethod,
    xi: DMatrix<f64>,
    adv: f64,
    diff: f64,
}

impl Burgers1d {
    pub fn new(params: BurgersParams, seed: u64) -> Result<Self> {
        if params.n < 3 || params.s == 0 || params.d == 0 || params.d > params.n {
            return Err(Error::InvalidInput("burgers1d needs n >= 3, s >= 1, 1 <= d <= n".into()));
        }
        let x = linspace(0.0, 1.0, params.n);
        let dx = 1.0 / (params.n - 1) as f64;
        let (kl_modes, kl_method) = kl_modes(&x, params.d, params.corr_len);
        let mut xi = DMatrix::zeros(params.s, params.d);
        for c in 0..params.s {
            let mut rng = sample_rng(seed, c);
            for i in 0..params.d {
                xi[(c, i)] = StandardNormal.sample(&mut rng);
            }
        }
        Ok(Burgers1d { adv: 1.0 / (2.0 * dx), diff: params.nu / (dx * dx), params, x, dx, kl_modes, kl_method, xi })
    }

    /// Deterministic part of the initial condition.
    pub fn mean_profile(x: f64) -> f64 {
        0.5 * (2.0 * PI * x).sin() * ((2.0 * PI * x).cos().exp() - 1.5)
    }

    #[inline]
    fn row<V: StateView + ?Sized>(&self, i: usize, v: &V) -> f64 {
        if i == 0 || i + 1 == self.params.n {
            return 0.0;
        }
        let (l, m, r) = (v.at(i - 1), v.at(i), v.at(i + 1));
        -m * (r - l) * self.adv + self.diff * (r - 2.0 * m + l)
    }

    #[inline]
    fn jac_row<V: StateView + ?Sized>(&self, i: usize, v: &V, out: &mut Vec<(usize, f64)>) {
        out.clear();
        if i == 0 || i + 1 == self.params.n {
            out.push((i, 0.0));
            return;
        }
        let (l, m, r) = (v.at(i - 1), v.at(i), v.at(i + 1));
        out.extend([
            (i - 1, m * self.adv + self.diff),
            (i, -(r - l) * self.adv - 2.0 * self.diff),
            (i + 1, -m * self.adv + self.diff),
        ]);
    }
}

fn kernel(a: f64, b: f64, lc: f64) -> f64 {
    let z = (a - b) / lc;
    (-z * z).exp()
}

/// Leading `d` scaled modes `√λ ψ` of the squared-exponential kernel on `x`.
///
/// With kernel matrix eigenpairs `(λ, u)`, `√λ u` does not depend on how the
/// continuous modes are normalized.
fn kl_modes(x: &[f64], d: usize, lc: f64) -> (DMatrix<f64>, KlMethod) {
    let n = x.len();
    if n <= KL_DENSE_MAX {
        let (lam, vecs) = leading_eigs(x, d, lc);
        let modes = DMatrix::from_fn(n, d, |i, k| lam[k].max(0.0).sqrt() * vecs[(i, k)]);
        (modes, KlMethod::Dense)
    } else {
        let xc = linspace(x[0], x[n - 1], KL_COARSE);
        let (lam, vecs) = leading_eigs(&xc, d, lc);
        let modes = DMatrix::from_fn(n, d, |i, k| {
            let acc: f64 = xc.iter().enumerate().map(|(j, &xj)| kernel(x[i], xj, lc) * vecs[(j, k)]).sum();
            acc / lam[k].sqrt()
        });
        (modes, KlMethod::Nystrom { coarse: KL_COARSE })
    }
}

fn leading_eigs(x: &[f64], d: usize, lc: f64) -> (Vec<f64>, DMatrix<f64>) {
    let n = x.len();
    let k = DMatrix::from_fn(n, n, |i, j| kernel(x[i], x[j], lc));
    let eig = SymmetricEigen::new(k);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lam: Vec<f64> = order.iter().take(d).map(|&j| eig.eigenvalues[j]).collect();
    let mut vecs = DMatrix::from_fn(n, d, |i, k| eig.eigenvectors[(i, order[k])]);
    for k in 0..d {
        let col = vecs.column(k);
        let amax = col.amax();
        let first = col.iter().copied().find(|v| v.abs() > 1e-8 * amax).unwrap_or(0.0);
        if first < 0.0 {
            vecs.column_mut(k).neg_mut();
        }
    }
    (lam, vecs)
}

impl Model for Burgers1d {
    fn name(&self) -> &'static str {
        "burgers1d"
    }

    fn n(&self) -> usize {
        self.params.n
    }

    fn samples(&self) -> usize {
        self.params.s
    }

    fn boundary(&self) -> Boundary {
        Boundary::Dirichlet
    }

    fn rhs_row(&self, row: usize, v: &dyn StateView, _c: usize, _t: f64) -> f64 {
        self.row(row, v)
    }

    fn jacobian_row(&self, row: usize, v: &dyn StateView, _c: usize, _t: f64, out: &mut Vec<(usize, f64)>) {
        self.jac_row(row, v, out);
    }

    fn neighbors(&self, row: usize, out: &mut Vec<usize>) {
        if row > 0 && row + 1 < self.params.n {
            out.extend([row - 1, row + 1]);
        }
    }

    fn rhs_column(&self, v: &[f64], _c: usize, _t: f64, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i, v);
        }
    }

    fn jacobian_csr(&self, v: &[f64], _c: usize, _t: f64) -> Csr {
        let n = self.params.n;
        let mut a = Csr::with_capacity(n, 3 * n);
        let mut row = Vec::with_capacity(3);
        for i in 0..n {
            self.jac_row(i, v, &mut row);
            a.push_row(&row);
        }
        a
    }

    fn initial_condition(&self) -> DMatrix<f64> {
        let p = &self.params;
        let mut v = DMatrix::zeros(p.n, p.s);
        for c in 0..p.s {
            for i in 1..p.n - 1 {
                let mut pert = 0.0;
                for k in 0..p.d {
                    pert += self.kl_modes[(i, k)] * self.xi[(c, k)];
                }
                v[(i, c)] = Self::mean_profile(self.x[i]) + p.sigma_x * pert;
            }
        }
        v
    }

    fn xi(&self) -> &DMatrix<f64> {
        &self.xi
    }

    fn describe(&self) -> Vec<(String, String)> {
        let p = &self.params;
        let kl = match self.kl_method {
            KlMethod::Dense => "dense eigendecomposition on the grid".to_string(),
            KlMethod::Nystrom { coarse } => format!("Nystrom extension from a {coarse}-point grid"),
        };
        vec![
            ("n".into(), p.n.to_string()),
            ("s".into(), p.s.to_string()),
            ("d".into(), p.d.to_string()),
            ("nu".into(), p.nu.to_string()),
            ("sigma_x".into(), p.sigma_x.to_string()),
            ("kl_kernel".into(), format!("squared exponential exp(-(x-x')^2/{}^2)", p.corr_len)),
            ("kl_modes".into(), kl),
            ("boundary".into(), "frozen Dirichlet rows, initial boundary values set to 0".into()),
        ]
    }
}
