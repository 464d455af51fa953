use super::{dot, nrm2, Csr, Ilu0};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preconditioner {
    None,
    Jacobi,
    #[default]
    Ilu0,
}

/// Inner linear solver for the per-column Newton systems.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearSolver {
    Gmres {
        restart: usize,
        max_iter: usize,
        precond: Preconditioner,
    },
    /// Dense LU, intended for small oracle problems.
    Dense,
}

impl Default for LinearSolver {
    fn default() -> Self {
        LinearSolver::Gmres { restart: 50, max_iter: 500, precond: Preconditioner::Ilu0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOutcome {
    pub iterations: usize,
    pub rel_residual: f64,
    pub converged: bool,
}

impl LinearSolver {
    /// Solves `a x = b` to relative residual `rtol` (or the rounding floor).
    pub fn solve(&self, a: &Csr, b: &[f64], rtol: f64) -> (Vec<f64>, GmresOutcome) {
        match self {
            LinearSolver::Dense => {
                let dense = a.to_dense();
                let rhs = nalgebra::DVector::from_column_slice(b);
                match dense.lu().solve(&rhs) {
                    Some(x) => {
                        let x = x.as_slice().to_vec();
                        let rel = rel_residual(a, &x, b);
                        (x, GmresOutcome { iterations: 1, rel_residual: rel, converged: true })
                    }
                    None => (vec![0.0; b.len()], GmresOutcome { iterations: 1, rel_residual: 1.0, converged: false }),
                }
            }
            LinearSolver::Gmres { restart, max_iter, precond } => {
                let m = match precond {
                    Preconditioner::None => Precond::Identity,
                    Preconditioner::Jacobi => {
                        let d = a.diagonal();
                        if d.iter().all(|v| *v != 0.0) {
                            Precond::Jacobi(d.iter().map(|v| 1.0 / v).collect())
                        } else {
                            Precond::Identity
                        }
                    }
                    Preconditioner::Ilu0 => Ilu0::new(a).map_or(Precond::Identity, Precond::Ilu),
                };
                gmres_with(a, b, rtol, *restart, *max_iter, &m)
            }
        }
    }
}

enum Precond {
    Identity,
    Jacobi(Vec<f64>),
    Ilu(Ilu0),
}

impl Precond {
    fn apply(&self, x: &mut [f64]) {
        match self {
            Precond::Identity => {}
            Precond::Jacobi(d) => x.iter_mut().zip(d).for_each(|(v, s)| *v *= s),
            Precond::Ilu(ilu) => ilu.apply(x),
        }
    }
}

fn rel_residual(a: &Csr, x: &[f64], b: &[f64]) -> f64 {
    let mut ax = vec![0.0; b.len()];
    a.matvec(x, &mut ax);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
    let bn = nrm2(b);
    if bn == 0.0 {
        nrm2(&r)
    } else {
        nrm2(&r) / bn
    }
}

/// Unpreconditioned restarted GMRES from a zero initial guess.
pub fn gmres(a: &Csr, b: &[f64], rtol: f64, restart: usize, max_iter: usize) -> (Vec<f64>, GmresOutcome) {
    gmres_with(a, b, rtol, restart, max_iter, &Precond::Identity)
}

fn gmres_with(a: &Csr, b: &[f64], rtol: f64, restart: usize, max_iter: usize, m: &Precond) -> (Vec<f64>, GmresOutcome) {
    let n = b.len();
    let restart = restart.max(1);
    let mut x = vec![0.0; n];
    let bnorm = nrm2(b);
    if bnorm == 0.0 {
        return (x, GmresOutcome { iterations: 0, rel_residual: 0.0, converged: true });
    }
    let anorm = a.norm_inf();
    let mut r = b.to_vec();
    let mut beta = bnorm;
    let mut iters = 0;
    let mut w = vec![0.0; n];
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(restart + 1);
    loop {
        // Rounding floor: the residual cannot be resolved below this level.
        let floor = 8.0 * f64::EPSILON * (anorm * nrm2(&x) + bnorm);
        let target = (rtol * bnorm).max(floor);
        if beta <= target {
            return (x, GmresOutcome { iterations: iters, rel_residual: beta / bnorm, converged: true });
        }
        if iters >= max_iter {
            return (x, GmresOutcome { iterations: iters, rel_residual: beta / bnorm, converged: false });
        }
        basis.clear();
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut h = vec![vec![0.0; restart + 1]; restart];
        let mut cs = vec![0.0; restart];
        let mut sn = vec![0.0; restart];
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k = 0;
        while k < restart && iters < max_iter {
            let mut z = basis[k].clone();
            m.apply(&mut z);
            a.matvec(&z, &mut w);
            let wn0 = nrm2(&w);
            for (i, vi) in basis.iter().enumerate() {
                let hij = dot(&w, vi);
                h[k][i] = hij;
                w.iter_mut().zip(vi).for_each(|(p, q)| *p -= hij * q);
            }
            let hn = nrm2(&w);
            h[k][k + 1] = hn;
            for i in 0..k {
                let t = cs[i] * h[k][i] + sn[i] * h[k][i + 1];
                h[k][i + 1] = -sn[i] * h[k][i] + cs[i] * h[k][i + 1];
                h[k][i] = t;
            }
            let denom = h[k][k].hypot(h[k][k + 1]);
            if denom == 0.0 {
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k][k + 1] / denom;
            h[k][k] = denom;
            h[k][k + 1] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            iters += 1;
            k += 1;
            let breakdown = hn <= 1e-14 * wn0;
            if g[k].abs() <= target || breakdown {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[j][i] * y[j];
            }
            y[i] = s / h[i][i];
        }
        let mut upd = vec![0.0; n];
        for (j, yj) in y.iter().enumerate() {
            upd.iter_mut().zip(&basis[j]).for_each(|(p, q)| *p += yj * q);
        }
        m.apply(&mut upd);
        x.iter_mut().zip(&upd).for_each(|(p, q)| *p += q);
        a.matvec(&x, &mut w);
        r.iter_mut().zip(b.iter().zip(&w)).for_each(|(ri, (bi, wi))| *ri = bi - wi);
        let new_beta = nrm2(&r);
        let stalled = new_beta > 0.5 * beta;
        beta = new_beta;
        if stalled {
            let floor = 8.0 * f64::EPSILON * (anorm * nrm2(&x) + bnorm);
            let converged = beta <= (rtol * bnorm).max(floor);
            return (x, GmresOutcome { iterations: iters, rel_residual: beta / bnorm, converged });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace(n: usize, shift: f64) -> Csr {
        let mut a = Csr::with_capacity(n, 3 * n);
        for i in 0..n {
            let mut row = Vec::new();
            if i > 0 {
                row.push((i - 1, -1.0));
            }
            row.push((i, 2.0 + shift));
            if i + 1 < n {
                row.push((i + 1, -1.0));
            }
            a.push_row(&row);
        }
        a
    }

    #[test]
    fn gmres_matches_dense_solve() {
        let a = laplace(60, 0.1);
        let b: Vec<f64> = (0..60).map(|i| ((i as f64) * 0.3).sin()).collect();
        let (x, out) = gmres(&a, &b, 1e-13, 50, 500);
        assert!(out.converged, "{out:?}");
        let (xd, _) = LinearSolver::Dense.solve(&a, &b, 1e-13);
        let err = x.iter().zip(&xd).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9 * xd.iter().map(|v| v.abs()).fold(0.0, f64::max));
    }

    #[test]
    fn ilu_preconditioned_converges_in_one_iteration_on_tridiagonal() {
        let a = laplace(200, 0.01);
        let b = vec![1.0; 200];
        let (_, out) = LinearSolver::default().solve(&a, &b, 1e-15);
        assert!(out.converged);
        assert!(out.iterations <= 2, "{out:?}");
    }
}
