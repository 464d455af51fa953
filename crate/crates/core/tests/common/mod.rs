#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn orthonormal(rng: &mut ChaCha8Rng, n: usize, k: usize) -> DMatrix<f64> {
    gaussian(rng, n, k).qr().q()
}

/// `A Bᵀ` with Gaussian factors, exact rank `r` almost surely.
pub fn low_rank(rng: &mut ChaCha8Rng, n: usize, m: usize, r: usize) -> DMatrix<f64> {
    gaussian(rng, n, r) * gaussian(rng, m, r).transpose()
}

pub fn pinv_norm_oracle(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    1.0 / sv.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.clone().singular_values().max()
}

pub fn rows(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), a.ncols(), |i, j| a[(idx[i], j)])
}

pub fn cols(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), idx.len(), |i, j| a[(i, idx[j])])
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

/// `dv_i/dt = λ_i v_i` with independent rows, one column per sample.
pub struct Decay {
    pub lambda: Vec<f64>,
    pub s: usize,
    pub v0: DMatrix<f64>,
    xi: DMatrix<f64>,
}

impl Decay {
    pub fn new(lambda: Vec<f64>, s: usize) -> Self {
        let n = lambda.len();
        let v0 = DMatrix::from_fn(n, s, |i, c| 1.0 + 0.1 * i as f64 + 0.01 * c as f64);
        Decay { lambda, s, v0, xi: DMatrix::zeros(s, 1) }
    }
}

impl tdbcur::Model for Decay {
    fn name(&self) -> &'static str {
        "decay"
    }

    fn n(&self) -> usize {
        self.lambda.len()
    }

    fn samples(&self) -> usize {
        self.s
    }

    fn boundary(&self) -> tdbcur::model::Boundary {
        tdbcur::model::Boundary::Periodic
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn rhs_row(&self, row: usize, v: &dyn tdbcur::model::StateView, _c: usize, _t: f64) -> f64 {
        self.lambda[row] * v.at(row)
    }

    fn jacobian_row(
        &self,
        row: usize,
        _v: &dyn tdbcur::model::StateView,
        _c: usize,
        _t: f64,
        out: &mut Vec<(usize, f64)>,
    ) {
        out.clear();
        out.push((row, self.lambda[row]));
    }

    fn neighbors(&self, _row: usize, _out: &mut Vec<usize>) {}

    fn initial_condition(&self) -> DMatrix<f64> {
        self.v0.clone()
    }

    fn xi(&self) -> &DMatrix<f64> {
        &self.xi
    }

    fn describe(&self) -> Vec<(String, String)> {
        Vec::new()
    }
}

/// Runs the full-order integrator to `t_final` and returns the final matrix.
pub fn fom_run<M: tdbcur::Model + ?Sized>(
    model: &M,
    v0: &DMatrix<f64>,
    spec: tdbcur::SchemeSpec,
    dt: f64,
    t_final: f64,
) -> DMatrix<f64> {
    let mut fom =
        tdbcur::FomIntegrator::new(model, v0.clone(), spec, dt, 0.0, tdbcur::NewtonOptions::default()).unwrap();
    let steps = (t_final / dt).round() as usize;
    for _ in 0..steps {
        fom.step().unwrap();
    }
    fom.current().clone()
}
