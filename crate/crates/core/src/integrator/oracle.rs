use nalgebra::{DMatrix, DVector};

use super::CorrectionBasis;
use crate::error::{Error, Result};
use crate::factorization::LowRankState;
use crate::linalg::lstsq;
use crate::model::Model;
use crate::schemes::{SchemeKind, SchemeSpec};

/// Largest `n` accepted by the dense test oracles.
pub const ORACLE_MAX_N: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    /// `r_δ × s` least-squares correction of the first Newton iteration.
    pub z_first: DMatrix<f64>,
    /// `n × s` state after the iteration finishes.
    pub v: DMatrix<f64>,
}

/// Gauss-Newton on all `n` rows with corrections in `span(U_δ)`.
///
/// Each iteration solves `min ‖A U_δ Z(:,c) − b‖₂` over every row; this is the
/// dense reference the collocated row solve approximates. Multistep schemes only.
#[allow(clippy::too_many_arguments)]
pub fn solve_rows_least_squares_oracle<M: Model + ?Sized>(
    model: &M,
    history: &[LowRankState],
    basis: &CorrectionBasis,
    spec: &SchemeSpec,
    dt: f64,
    eps_t: f64,
    max_iter: usize,
) -> Result<OracleSolution> {
    let n = model.n();
    if n > ORACLE_MAX_N {
        return Err(Error::Capability(format!("least-squares oracle needs n <= {ORACLE_MAX_N}, got {n}")));
    }
    if spec.kind != SchemeKind::Multistep {
        return Err(Error::Capability("least-squares oracle supports multistep schemes only".into()));
    }
    let l = spec.steps_or_stages();
    if history.len() < l {
        return Err(Error::Startup { needed: l, available: history.len() });
    }
    let levels: Vec<DMatrix<f64>> = history[..l].iter().map(|h| h.reconstruct()).collect();
    let s = levels[0].ncols();
    let mut g = DMatrix::zeros(n, s);
    for (j, v) in levels.iter().enumerate() {
        g += v * spec.alpha_back(j + 1);
        if spec.beta_back(j + 1) != 0.0 {
            g -= model.rhs_matrix(v, history[j].t) * (dt * spec.beta_back(j + 1));
        }
    }
    let gamma = dt * spec.beta_back(0);
    let t = history[0].t + dt;
    let ud = &basis.u_delta;
    let rd = basis.r_delta;
    let mut v = levels[0].clone();
    let mut z_first = DMatrix::zeros(rd, s);
    let mut jac = Vec::new();
    for c in 0..s {
        let mut u: Vec<f64> = v.column(c).iter().copied().collect();
        for it in 0..max_iter {
            let mut a = DMatrix::zeros(n, n);
            let mut b = DVector::zeros(n);
            for i in 0..n {
                b[i] = -(u[i] + g[(i, c)] - gamma * model.rhs_row(i, &u, c, t));
                a[(i, i)] = 1.0;
                model.jacobian_row(i, &u, c, t, &mut jac);
                for &(j, val) in &jac {
                    a[(i, j)] -= gamma * val;
                }
            }
            let au = &a * ud;
            let (z, _) = lstsq(&au, &DMatrix::from_column_slice(n, 1, b.as_slice()));
            let du = ud * &z;
            if it == 0 {
                z_first.column_mut(c).copy_from(&z.column(0));
            }
            for (ui, d) in u.iter_mut().zip(du.iter()) {
                *ui += d;
            }
            if !u.iter().all(|x| x.is_finite()) {
                return Err(Error::Divergence { column: c });
            }
            if du.norm() / n as f64 <= eps_t {
                break;
            }
        }
        v.column_mut(c).copy_from_slice(&u);
    }
    Ok(OracleSolution { z_first, v })
}
