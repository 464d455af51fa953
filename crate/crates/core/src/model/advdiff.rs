use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use super::{linspace, sample_rng, Boundary, Model, StateView};
use crate::error::{Error, Result};
use crate::linalg::Csr;

#[derive(Debug, Clone, PartialEq)]
pub struct AdvDiffParams {
    pub n: usize,
    pub s: usize,
    pub d: usize,
    pub alpha: f64,
    /// Advection speed.
    pub speed: f64,
    /// Width of the Gaussian bumps in the initial condition.
    pub width: f64,
}

impl Default for AdvDiffParams {
    fn default() -> Self {
        AdvDiffParams { n: 201, s: 32, d: 20, alpha: 0.1, speed: 1.0, width: 0.5 }
    }
}

/// `v_t + a v_x = α v_xx` on `[0, 1]` with homogeneous Dirichlet rows.
#[derive(Debug, Clone)]
pub struct AdvectionDiffusion1d {
    pub params: AdvDiffParams,
    pub x: Vec<f64>,
    pub dx: f64,
    xi: DMatrix<f64>,
    lo: f64,
    mid: f64,
    hi: f64,
}

impl AdvectionDiffusion1d {
    pub fn new(params: AdvDiffParams, seed: u64) -> Result<Self> {
        if params.n < 3 || params.s == 0 || params.d == 0 {
            return Err(Error::InvalidInput("advdiff1d needs n >= 3, s >= 1, d >= 1".into()));
        }
        let x = linspace(0.0, 1.0, params.n);
        let dx = 1.0 / (params.n - 1) as f64;
        let mut xi = DMatrix::zeros(params.s, params.d);
        for c in 0..params.s {
            let mut rng = sample_rng(seed, c);
            for i in 0..params.d {
                xi[(c, i)] = StandardNormal.sample(&mut rng);
            }
        }
        let a = params.speed / (2.0 * dx);
        let k = params.alpha / (dx * dx);
        Ok(AdvectionDiffusion1d { x, dx, xi, lo: a + k, mid: -2.0 * k, hi: -a + k, params })
    }

    /// Assembled operator `L` with zeroed boundary rows.
    pub fn operator_matrix(&self) -> DMatrix<f64> {
        let n = self.params.n;
        let mut l = DMatrix::zeros(n, n);
        for i in 1..n - 1 {
            l[(i, i - 1)] = self.lo;
            l[(i, i)] = self.mid;
            l[(i, i + 1)] = self.hi;
        }
        l
    }

    #[inline]
    fn row<V: StateView + ?Sized>(&self, i: usize, v: &V) -> f64 {
        if i == 0 || i + 1 == self.params.n {
            return 0.0;
        }
        self.lo * v.at(i - 1) + self.mid * v.at(i) + self.hi * v.at(i + 1)
    }

    fn jac_row(&self, i: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        if i == 0 || i + 1 == self.params.n {
            out.push((i, 0.0));
        } else {
            out.extend([(i - 1, self.lo), (i, self.mid), (i + 1, self.hi)]);
        }
    }
}

impl Model for AdvectionDiffusion1d {
    fn name(&self) -> &'static str {
        "advdiff1d"
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

    fn is_linear(&self) -> bool {
        true
    }

    fn rhs_row(&self, row: usize, v: &dyn StateView, _c: usize, _t: f64) -> f64 {
        self.row(row, v)
    }

    fn jacobian_row(&self, row: usize, _v: &dyn StateView, _c: usize, _t: f64, out: &mut Vec<(usize, f64)>) {
        self.jac_row(row, out);
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

    fn jacobian_csr(&self, _v: &[f64], _c: usize, _t: f64) -> Csr {
        let n = self.params.n;
        let mut a = Csr::with_capacity(n, 3 * n);
        let mut row = Vec::with_capacity(3);
        for i in 0..n {
            self.jac_row(i, &mut row);
            a.push_row(&row);
        }
        a
    }

    fn initial_condition(&self) -> DMatrix<f64> {
        let p = &self.params;
        let x0 = linspace(0.0, 1.0, p.d);
        let mut v = DMatrix::zeros(p.n, p.s);
        for c in 0..p.s {
            for (i, &x) in self.x.iter().enumerate() {
                let envelope = x * (1.0 - x);
                let mut acc = 0.0;
                for (k, &xk) in x0.iter().enumerate() {
                    let z = (x - xk) / p.width;
                    acc += (-z * z).exp() * self.xi[(c, k)];
                }
                v[(i, c)] = acc * envelope;
            }
        }
        v
    }

    fn xi(&self) -> &DMatrix<f64> {
        &self.xi
    }

    fn describe(&self) -> Vec<(String, String)> {
        let p = &self.params;
        vec![
            ("n".into(), p.n.to_string()),
            ("s".into(), p.s.to_string()),
            ("d".into(), p.d.to_string()),
            ("alpha".into(), p.alpha.to_string()),
            ("speed".into(), p.speed.to_string()),
            ("bump_width".into(), p.width.to_string()),
            ("discretization".into(), "second-order central differences, zeroed boundary rows".into()),
        ]
    }
}
