//! Parametric PDE models discretized into matrix differential equations `dV/dt = F(V)`.
//!
//! Rows are grid unknowns, columns are parameter samples. Each model exposes
//! column-wise right-hand sides, row-restricted analytic Jacobians, and its
//! stencil adjacency.

mod advdiff;
mod burgers;
mod grayscott;

pub use advdiff::{AdvDiffParams, AdvectionDiffusion1d};
pub use burgers::{Burgers1d, BurgersParams, KlMethod};
pub use grayscott::{GrayScott2d, GrayScottParams};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::linalg::Csr;

/// Read access to state values by global row index.
pub trait StateView {
    fn at(&self, row: usize) -> f64;
}

impl StateView for [f64] {
    #[inline]
    fn at(&self, row: usize) -> f64 {
        self[row]
    }
}

impl StateView for &[f64] {
    #[inline]
    fn at(&self, row: usize) -> f64 {
        self[row]
    }
}

impl StateView for Vec<f64> {
    #[inline]
    fn at(&self, row: usize) -> f64 {
        self[row]
    }
}

/// Values known only on a sorted subset of rows.
#[derive(Debug, Clone, Copy)]
pub struct LocalState<'a> {
    pub rows: &'a [usize],
    pub vals: &'a [f64],
}

impl StateView for LocalState<'_> {
    #[inline]
    fn at(&self, row: usize) -> f64 {
        match self.rows.binary_search(&row) {
            Ok(k) => self.vals[k],
            Err(_) => panic!("row {row} is outside the local row set"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// First and last rows are frozen (zero right-hand side).
    Dirichlet,
    Periodic,
}

/// A discretized parametric PDE with `s` sampled parameter vectors.
///
/// Implementations are immutable after construction, so they can be shared
/// across worker threads.
pub trait Model: Send + Sync {
    fn name(&self) -> &'static str;
    fn n(&self) -> usize;
    fn samples(&self) -> usize;
    fn boundary(&self) -> Boundary;

    fn is_linear(&self) -> bool {
        false
    }

    /// `F(v)` at one row for sample `c`.
    fn rhs_row(&self, row: usize, v: &dyn StateView, c: usize, t: f64) -> f64;

    /// Nonzeros of row `row` of `J(v)`, sorted by column, diagonal included.
    fn jacobian_row(&self, row: usize, v: &dyn StateView, c: usize, t: f64, out: &mut Vec<(usize, f64)>);

    /// Rows other than `row` that `F(row)` depends on.
    fn neighbors(&self, row: usize, out: &mut Vec<usize>);

    fn rhs_column(&self, v: &[f64], c: usize, t: f64, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.rhs_row(i, &v as &dyn StateView, c, t);
        }
    }

    fn jacobian_csr(&self, v: &[f64], c: usize, t: f64) -> Csr {
        let n = self.n();
        let mut a = Csr::with_capacity(n, 7 * n);
        let mut row = Vec::new();
        for i in 0..n {
            self.jacobian_row(i, &v as &dyn StateView, c, t, &mut row);
            a.push_row(&row);
        }
        a
    }

    /// Sampled initial condition `V_0` (`n × s`).
    fn initial_condition(&self) -> DMatrix<f64>;

    /// Sampled random parameters, one row per sample.
    fn xi(&self) -> &DMatrix<f64>;

    /// Parameter summary for run metadata.
    fn describe(&self) -> Vec<(String, String)>;

    /// Full stencil map, row by row.
    fn stencil(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        (0..self.n())
            .map(|i| {
                out.clear();
                self.neighbors(i, &mut out);
                out.clone()
            })
            .collect()
    }

    fn rhs_matrix(&self, v: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
        let mut f = DMatrix::zeros(v.nrows(), v.ncols());
        for c in 0..v.ncols() {
            self.rhs_column(v.column(c).as_slice(), c, t, f.column_mut(c).as_mut_slice());
        }
        f
    }
}

/// Per-sample generator keyed by `(seed, sample)`, independent of evaluation order.
pub fn sample_rng(seed: u64, sample: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(sample as u64);
    rng
}

pub(crate) fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Builds a model from its config name and a generic parameter map.
pub fn build_model(name: &str, params: &ModelParams, seed: u64) -> crate::Result<Box<dyn Model>> {
    match name {
        "advdiff1d" => {
            let mut p = AdvDiffParams::default();
            p.n = params.n.unwrap_or(p.n);
            p.s = params.s.unwrap_or(p.s);
            p.d = params.d.unwrap_or(p.d);
            p.alpha = params.alpha.unwrap_or(p.alpha);
            Ok(Box::new(AdvectionDiffusion1d::new(p, seed)?))
        }
        "burgers1d" => {
            let mut p = BurgersParams::default();
            p.n = params.n.unwrap_or(p.n);
            p.s = params.s.unwrap_or(p.s);
            p.d = params.d.unwrap_or(p.d);
            p.nu = params.nu.unwrap_or(p.nu);
            p.sigma_x = params.sigma.unwrap_or(p.sigma_x);
            p.corr_len = params.corr_len.unwrap_or(p.corr_len);
            Ok(Box::new(Burgers1d::new(p, seed)?))
        }
        "grayscott2d" => {
            let mut p = GrayScottParams::default();
            p.nx = params.nx.unwrap_or(p.nx);
            p.ny = params.ny.unwrap_or(p.ny);
            p.s = params.s.unwrap_or(p.s);
            p.eps1 = params.eps1.unwrap_or(p.eps1);
            p.eps2 = params.eps2.unwrap_or(p.eps2);
            p.alpha = params.alpha.unwrap_or(p.alpha);
            p.beta0 = params.beta0.unwrap_or(p.beta0);
            p.sigma = params.sigma.unwrap_or(p.sigma);
            Ok(Box::new(GrayScott2d::new(p, seed)?))
        }
        other => Err(crate::Error::Config(format!("unknown model '{other}'"))),
    }
}

/// Optional overrides of model parameters; unset fields keep model defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelParams {
    pub n: Option<usize>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub s: Option<usize>,
    pub d: Option<usize>,
    pub alpha: Option<f64>,
    pub nu: Option<f64>,
    pub eps1: Option<f64>,
    pub eps2: Option<f64>,
    pub beta0: Option<f64>,
    pub sigma: Option<f64>,
    pub corr_len: Option<f64>,
}
