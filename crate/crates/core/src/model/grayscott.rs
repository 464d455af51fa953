use nalgebra::DMatrix;
use rand::Rng;

use super::{sample_rng, Boundary, Model, StateView};
use crate::error::{Error, Result};
use crate::linalg::Csr;

#[derive(Debug, Clone, PartialEq)]
pub struct GrayScottParams {
    pub nx: usize,
    pub ny: usize,
    pub s: usize,
    pub eps1: f64,
    pub eps2: f64,
    pub alpha: f64,
    /// Mean of the random decay rate, `β = β₀ (1 + σ ξ)`.
    pub beta0: f64,
    pub sigma: f64,
}

impl Default for GrayScottParams {
    fn default() -> Self {
        GrayScottParams { nx: 100, ny: 100, s: 32, eps1: 2e-5, eps2: 1e-5, alpha: 0.04, beta0: 0.1, sigma: 1e-4 }
    }
}

/// Gray-Scott reaction-diffusion on the periodic square `[−1, 1)²`.
///
/// Each column stacks the `u` field (rows `0..N`) above `v` (rows `N..2N`),
/// with `N = nx·ny` and cell `(ix, iy)` at offset `iy·nx + ix`.
#[derive(Debug, Clone)]
pub struct GrayScott2d {
    pub params: GrayScottParams,
    pub dx: f64,
    pub dy: f64,
    /// Per-sample decay rate.
    pub beta: Vec<f64>,
    xi: DMatrix<f64>,
    cells: usize,
}

impl GrayScott2d {
    pub fn new(params: GrayScottParams, seed: u64) -> Result<Self> {
        if params.nx < 3 || params.ny < 3 || params.s == 0 {
            return Err(Error::InvalidInput("grayscott2d needs nx, ny >= 3 and s >= 1".into()));
        }
        let mut xi = DMatrix::zeros(params.s, 1);
        let mut beta = Vec::with_capacity(params.s);
        for c in 0..params.s {
            let mut rng = sample_rng(seed, c);
            let u: f64 = rng.random();
            xi[(c, 0)] = u;
            beta.push(params.beta0 * (1.0 + params.sigma * u));
        }
        Ok(GrayScott2d {
            dx: 2.0 / params.nx as f64,
            dy: 2.0 / params.ny as f64,
            cells: params.nx * params.ny,
            params,
            beta,
            xi,
        })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Cell coordinates `(x, y)` of flat cell index `k`.
    pub fn coords(&self, k: usize) -> (f64, f64) {
        let (ix, iy) = (k % self.params.nx, k / self.params.nx);
        (-1.0 + ix as f64 * self.dx, -1.0 + iy as f64 * self.dy)
    }

    /// Periodic neighbors `[west, east, south, north]` of cell `k`.
    #[inline]
    fn around(&self, k: usize) -> [usize; 4] {
        let nx = self.params.nx;
        let ny = self.params.ny;
        let (ix, iy) = (k % nx, k / nx);
        let w = iy * nx + (ix + nx - 1) % nx;
        let e = iy * nx + (ix + 1) % nx;
        let s = ((iy + ny - 1) % ny) * nx + ix;
        let n = ((iy + 1) % ny) * nx + ix;
        [w, e, s, n]
    }

    #[inline]
    fn row<V: StateView + ?Sized>(&self, row: usize, v: &V, c: usize) -> f64 {
        let p = &self.params;
        let nc = self.cells;
        let (k, field_v) = if row < nc { (row, false) } else { (row - nc, true) };
        let off = if field_v { nc } else { 0 };
        let [w, e, s, n] = self.around(k);
        let center = v.at(off + k);
        let lap = (v.at(off + w) - 2.0 * center + v.at(off + e)) / (self.dx * self.dx)
            + (v.at(off + s) - 2.0 * center + v.at(off + n)) / (self.dy * self.dy);
        let uu = v.at(k);
        let vv = v.at(nc + k);
        if field_v {
            p.eps2 * lap - self.beta[c] * vv + uu * vv * vv
        } else {
            p.eps1 * lap + p.alpha * (1.0 - uu) - uu * vv * vv
        }
    }

    fn jac_row<V: StateView + ?Sized>(&self, row: usize, v: &V, c: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        let p = &self.params;
        let nc = self.cells;
        let (k, field_v) = if row < nc { (row, false) } else { (row - nc, true) };
        let off = if field_v { nc } else { 0 };
        let eps = if field_v { p.eps2 } else { p.eps1 };
        let cx = eps / (self.dx * self.dx);
        let cy = eps / (self.dy * self.dy);
        let uu = v.at(k);
        let vv = v.at(nc + k);
        let [w, e, s, n] = self.around(k);
        let (diag, cross, partner) = if field_v {
            (-2.0 * (cx + cy) - self.beta[c] + 2.0 * uu * vv, vv * vv, k)
        } else {
            (-2.0 * (cx + cy) - p.alpha - vv * vv, -2.0 * uu * vv, nc + k)
        };
        out.extend([(off + w, cx), (off + e, cx), (off + s, cy), (off + n, cy), (off + k, diag), (partner, cross)]);
        out.sort_unstable_by_key(|e| e.0);
    }
}

impl Model for GrayScott2d {
    fn name(&self) -> &'static str {
        "grayscott2d"
    }

    fn n(&self) -> usize {
        2 * self.cells
    }

    fn samples(&self) -> usize {
        self.params.s
    }

    fn boundary(&self) -> Boundary {
        Boundary::Periodic
    }

    fn rhs_row(&self, row: usize, v: &dyn StateView, c: usize, _t: f64) -> f64 {
        self.row(row, v, c)
    }

    fn jacobian_row(&self, row: usize, v: &dyn StateView, c: usize, _t: f64, out: &mut Vec<(usize, f64)>) {
        self.jac_row(row, v, c, out);
    }

    fn neighbors(&self, row: usize, out: &mut Vec<usize>) {
        let nc = self.cells;
        let (k, off, partner) = if row < nc { (row, 0, nc + row) } else { (row - nc, nc, row - nc) };
        out.extend(self.around(k).iter().map(|j| off + j));
        out.push(partner);
    }

    fn rhs_column(&self, v: &[f64], c: usize, _t: f64, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i, v, c);
        }
    }

    fn jacobian_csr(&self, v: &[f64], c: usize, _t: f64) -> Csr {
        let n = 2 * self.cells;
        let mut a = Csr::with_capacity(n, 6 * n);
        let mut row = Vec::with_capacity(6);
        for i in 0..n {
            self.jac_row(i, v, c, &mut row);
            a.push_row(&row);
        }
        a
    }

    fn initial_condition(&self) -> DMatrix<f64> {
        let nc = self.cells;
        let mut col = vec![0.0; 2 * nc];
        for k in 0..nc {
            let (x, y) = self.coords(k);
            col[k] = 1.0 - (-80.0 * ((x + 0.05).powi(2) + (y + 0.02).powi(2))).exp();
            col[nc + k] = (-80.0 * ((x - 0.05).powi(2) + (y - 0.02).powi(2))).exp();
        }
        DMatrix::from_fn(2 * nc, self.params.s, |i, _| col[i])
    }

    fn xi(&self) -> &DMatrix<f64> {
        &self.xi
    }

    fn describe(&self) -> Vec<(String, String)> {
        let p = &self.params;
        vec![
            ("nx".into(), p.nx.to_string()),
            ("ny".into(), p.ny.to_string()),
            ("s".into(), p.s.to_string()),
            ("eps1".into(), p.eps1.to_string()),
            ("eps2".into(), p.eps2.to_string()),
            ("alpha".into(), p.alpha.to_string()),
            ("beta".into(), format!("{} * (1 + {} * U(0,1))", p.beta0, p.sigma)),
            ("layout".into(), "u stacked above v, cell index iy*nx + ix".into()),
            ("initial_condition".into(), "identical Gaussian-bump fields in every column".into()),
        ]
    }
}
