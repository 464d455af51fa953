use nalgebra::DMatrix;
use rayon::prelude::*;

use super::CorrectionBasis;
use crate::error::{Error, Result};
use crate::factorization::LowRankState;
use crate::linalg::{nrm2, PivotedQr};
use crate::model::{LocalState, Model};
use crate::schemes::{SchemeKind, SchemeSpec};

/// Rows `V^k(p,:)` from the reduced Newton iteration, with per-column traces.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSolution {
    /// `|p| × s` solution at the selected rows.
    pub v_p: DMatrix<f64>,
    /// Newton iterations per column, summed over DIRK stages.
    pub iterations: Vec<usize>,
    /// `‖R(p,c)‖₂` at the returned iterate (last stage for DIRK).
    pub final_residual: Vec<f64>,
    /// `‖R_i(p,c)‖₂` at iterates `i = 1, 2, …` (iterate 1 is the initial guess).
    pub residual_history: Vec<Vec<f64>>,
    /// Iterates at `p`, one entry per recorded residual (multistep only, on request).
    pub iterates: Option<Vec<Vec<Vec<f64>>>>,
}

struct RowGeometry<'a> {
    q: &'a [usize],
    pos_p: &'a [usize],
    /// Row-major `U_δ(q,:)`.
    uq: &'a [f64],
    rd: usize,
    oversampled: bool,
}

struct StageRows<'a> {
    w0: Option<&'a [f64]>,
    mu: f64,
    gamma: f64,
    g_p: &'a [f64],
    t: f64,
}

#[derive(Default)]
struct RowTrace {
    iterations: usize,
    residuals: Vec<f64>,
    iterates: Vec<Vec<f64>>,
}

fn stage_state(stage: &StageRows, u: &[f64], w: &mut [f64]) {
    match stage.w0 {
        None => w.copy_from_slice(u),
        Some(w0) => {
            for ((wi, bi), ui) in w.iter_mut().zip(w0).zip(u) {
                *wi = bi + stage.mu * ui;
            }
        }
    }
}

fn residual_at_p<M: Model + ?Sized>(
    model: &M,
    c: usize,
    geo: &RowGeometry,
    stage: &StageRows,
    u: &[f64],
    w: &mut [f64],
    b: &mut [f64],
) {
    stage_state(stage, u, w);
    let view = LocalState { rows: geo.q, vals: w };
    for (k, &qp) in geo.pos_p.iter().enumerate() {
        let f = model.rhs_row(geo.q[qp], &view, c, stage.t);
        b[k] = -(u[qp] + stage.g_p[k] - stage.gamma * f);
    }
}

/// Reduced Newton iteration on rows `p` for one column and one implicit equation.
#[allow(clippy::too_many_arguments)]
fn newton_rows<M: Model + ?Sized>(
    model: &M,
    c: usize,
    geo: &RowGeometry,
    stage: &StageRows,
    u: &mut [f64],
    eps_t: f64,
    max_iter: usize,
    record: bool,
) -> Result<RowTrace> {
    let nq = geo.q.len();
    let np = geo.pos_p.len();
    let rd = geo.rd;
    let scale = stage.gamma * stage.mu;
    let mut w = vec![0.0; nq];
    let mut b = vec![0.0; np];
    let mut jac = Vec::with_capacity(8);
    let mut ar = DMatrix::zeros(np, rd);
    let mut trace = RowTrace::default();
    let snapshot = |u: &[f64]| geo.pos_p.iter().map(|&qp| u[qp]).collect::<Vec<f64>>();
    for _ in 0..max_iter {
        stage_state(stage, u, &mut w);
        let view = LocalState { rows: geo.q, vals: &w };
        for (k, &qp) in geo.pos_p.iter().enumerate() {
            let row = geo.q[qp];
            let f = model.rhs_row(row, &view, c, stage.t);
            b[k] = -(u[qp] + stage.g_p[k] - stage.gamma * f);
            for j in 0..rd {
                ar[(k, j)] = geo.uq[qp * rd + j];
            }
            model.jacobian_row(row, &view, c, stage.t, &mut jac);
            for &(col, val) in &jac {
                let qj = geo.q.binary_search(&col).map_err(|_| {
                    Error::ModelDefinition(format!("jacobian of row {row} touches {col} outside p ∪ p_a"))
                })?;
                let coef = scale * val;
                for j in 0..rd {
                    ar[(k, j)] -= coef * geo.uq[qj * rd + j];
                }
            }
        }
        trace.residuals.push(nrm2(&b));
        if record {
            trace.iterates.push(snapshot(u));
        }
        let fact = PivotedQr::new(ar.clone());
        if fact.rank() < rd && !geo.oversampled {
            return Err(Error::RowConditioning { column: c });
        }
        let z = fact.solve_vec(&b);
        let mut dp = 0.0;
        for (qi, ui) in u.iter_mut().enumerate() {
            let d: f64 = (0..rd).map(|j| geo.uq[qi * rd + j] * z[j]).sum();
            *ui += d;
        }
        for &qp in geo.pos_p {
            let d: f64 = (0..rd).map(|j| geo.uq[qp * rd + j] * z[j]).sum();
            dp += d * d;
        }
        trace.iterations += 1;
        let eps = dp.sqrt() / np as f64;
        if !eps.is_finite() || !u.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { column: c });
        }
        if eps <= eps_t {
            break;
        }
    }
    residual_at_p(model, c, geo, stage, u, &mut w, &mut b);
    trace.residuals.push(nrm2(&b));
    if record {
        trace.iterates.push(snapshot(u));
    }
    Ok(trace)
}

fn sorted_union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut q: Vec<usize> = a.iter().chain(b).copied().collect();
    q.sort_unstable();
    q.dedup();
    q
}

fn positions(q: &[usize], idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|i| q.binary_search(i).expect("index is in the union")).collect()
}

/// Solves for `V^k(p,:)` with Newton corrections restricted to `span(U_δ)`.
///
/// `history[j]` holds `V̂^{k−1−j}`. Only rows `p ∪ p_a` of the history are
/// reconstructed; no `n × s` object is formed.
#[allow(clippy::too_many_arguments)]
pub fn solve_rows<M: Model + ?Sized>(
    model: &M,
    history: &[LowRankState],
    basis: &CorrectionBasis,
    p: &[usize],
    p_a: &[usize],
    spec: &SchemeSpec,
    dt: f64,
    eps_t: f64,
    max_iter: usize,
    record_iterates: bool,
) -> Result<RowSolution> {
    let prev = history.first().ok_or(Error::Startup { needed: 1, available: 0 })?;
    let s = prev.s();
    let max_iter = if model.is_linear() { max_iter.min(1) } else { max_iter };
    let rd = basis.r_delta;
    if p.len() < rd {
        return Err(Error::InvalidInput(format!("need at least r_delta = {rd} rows, got {}", p.len())));
    }
    let q = sorted_union(p, p_a);
    let pos_p = positions(&q, p);
    let mut uq = Vec::with_capacity(q.len() * rd);
    for &row in &q {
        for j in 0..rd {
            uq.push(basis.u_delta[(row, j)]);
        }
    }
    let geo = RowGeometry { q: &q, pos_p: &pos_p, uq: &uq, rd, oversampled: p.len() > rd };
    let t = prev.t;
    let np = p.len();

    let per_column: Vec<Result<(Vec<f64>, RowTrace, f64)>> = match spec.kind {
        SchemeKind::Multistep => {
            let l = spec.steps_or_stages();
            if history.len() < l {
                return Err(Error::Startup { needed: l, available: history.len() });
            }
            let levels: Vec<DMatrix<f64>> = history.iter().take(l).map(|h| h.rows(&q)).collect();
            let gamma = dt * spec.beta_back(0);
            (0..s)
                .into_par_iter()
                .map(|c| {
                    let mut g_p = vec![0.0; np];
                    for (j, lev) in levels.iter().enumerate() {
                        let col = lev.column(c);
                        let a = spec.alpha_back(j + 1);
                        let bcoef = spec.beta_back(j + 1);
                        let view = LocalState { rows: &q, vals: col.as_slice() };
                        for (k, &qp) in pos_p.iter().enumerate() {
                            g_p[k] += a * col[qp];
                            if bcoef != 0.0 {
                                g_p[k] -= dt * bcoef * model.rhs_row(q[qp], &view, c, history[j].t);
                            }
                        }
                    }
                    let mut u = levels[0].column(c).as_slice().to_vec();
                    let stage = StageRows { w0: None, mu: 1.0, gamma, g_p: &g_p, t: t + dt };
                    let tr = newton_rows(model, c, &geo, &stage, &mut u, eps_t, max_iter, record_iterates)?;
                    let vp: Vec<f64> = pos_p.iter().map(|&qp| u[qp]).collect();
                    let fin = *tr.residuals.last().unwrap_or(&0.0);
                    Ok((vp, tr, fin))
                })
                .collect()
        }
        SchemeKind::Dirk => {
            let prev_rows = prev.rows(&q);
            let zeros = vec![0.0; np];
            let stages = spec.steps_or_stages();
            let up = crate::linalg::select_rows(&basis.u_delta, p);
            let start = PivotedQr::new(up);
            (0..s)
                .into_par_iter()
                .map(|c| {
                    let col = prev_rows.column(c);
                    let view = LocalState { rows: &q, vals: col.as_slice() };
                    let v_prev: Vec<f64> = col.iter().copied().collect();
                    // Interpolant of F(V^{k-1}) in span(U_δ) so the iterate stays in the correction space.
                    let f_p: Vec<f64> = p.iter().map(|&row| model.rhs_row(row, &view, c, t)).collect();
                    let z0 = start.solve_vec(&f_p);
                    let mut u: Vec<f64> =
                        (0..q.len()).map(|qi| (0..rd).map(|j| uq[qi * rd + j] * z0[j]).sum()).collect();
                    let mut slopes: Vec<Vec<f64>> = Vec::with_capacity(stages);
                    let mut total = RowTrace::default();
                    let mut fin = 0.0;
                    for l in 0..stages {
                        let mut w0 = v_prev.clone();
                        for (m, km) in slopes.iter().enumerate() {
                            let a = dt * spec.tableau[l][m];
                            w0.iter_mut().zip(km).for_each(|(w, k)| *w += a * k);
                        }
                        let stage = StageRows {
                            w0: Some(&w0),
                            mu: dt * spec.diag(l),
                            gamma: 1.0,
                            g_p: &zeros,
                            t: t + spec.nodes[l] * dt,
                        };
                        let tr = newton_rows(model, c, &geo, &stage, &mut u, eps_t, max_iter, false)?;
                        total.iterations += tr.iterations;
                        total.residuals.extend(tr.residuals.iter().copied());
                        fin = *tr.residuals.last().unwrap_or(&0.0);
                        slopes.push(u.clone());
                    }
                    let vp: Vec<f64> = pos_p
                        .iter()
                        .map(|&qp| {
                            let mut v = v_prev[qp];
                            for (bl, kl) in spec.weights.iter().zip(&slopes) {
                                v += dt * bl * kl[qp];
                            }
                            v
                        })
                        .collect();
                    Ok((vp, total, fin))
                })
                .collect()
        }
    };

    let mut v_p = DMatrix::zeros(np, s);
    let mut iterations = Vec::with_capacity(s);
    let mut final_residual = Vec::with_capacity(s);
    let mut residual_history = Vec::with_capacity(s);
    let mut iterates = record_iterates.then(Vec::new);
    for (c, r) in per_column.into_iter().enumerate() {
        let (vp, tr, fin) = r?;
        v_p.column_mut(c).copy_from_slice(&vp);
        iterations.push(tr.iterations);
        final_residual.push(fin);
        residual_history.push(tr.residuals);
        if let Some(it) = iterates.as_mut() {
            it.push(tr.iterates);
        }
    }
    Ok(RowSolution { v_p, iterations, final_residual, residual_history, iterates })
}
