//! Full-order reference solvers: per-column implicit Newton, matrix exponential, RK4.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{nrm2, LinearSolver};
use crate::model::Model;
use crate::schemes::{assemble_column, dirk_update, SchemeKind, SchemeSpec, StageEquation};

/// Largest operator accepted by [`exact_linear_solution`].
pub const EXPM_MAX_N: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOptions {
    /// Convergence threshold on `‖δ‖₂/√n`.
    pub tol: f64,
    pub max_iter: usize,
    /// Updates below this level that stop contracting are accepted as converged.
    pub stall_tol: f64,
    pub linear: LinearSolver,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-14, max_iter: 20, stall_tol: 1e-10, linear: LinearSolver::default() }
    }
}

/// Newton history of one column solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ColumnTrace {
    /// `‖δ‖₂/√n` per iteration.
    pub updates: Vec<f64>,
    /// Relative linear residual per iteration.
    pub linear_residuals: Vec<f64>,
    pub linear_iterations: usize,
    /// Accepted at the rounding floor rather than at `tol`.
    pub stalled: bool,
}

impl ColumnTrace {
    pub fn iterations(&self) -> usize {
        self.updates.len()
    }

    fn absorb(&mut self, other: ColumnTrace) {
        self.updates.extend(other.updates);
        self.linear_residuals.extend(other.linear_residuals);
        self.linear_iterations += other.linear_iterations;
        self.stalled |= other.stalled;
    }
}

/// Largest relative tolerance of the inner linear solve (inexact Newton).
const INEXACT_MAX: f64 = 1e-4;

/// Newton solve of `u + g − γF(w0 + μu) = 0` on a full column.
///
/// The inner tolerance follows the size of the last update, so early
/// iterations solve loosely and the final ones to `tol / 10`.
pub fn solve_stage_column<M: Model + ?Sized>(
    model: &M,
    c: usize,
    t: f64,
    eq: &StageEquation,
    mut u: Vec<f64>,
    opts: &NewtonOptions,
) -> Result<(Vec<f64>, ColumnTrace)> {
    let n = model.n();
    let sqrt_n = (n as f64).sqrt();
    let floor = opts.tol / 10.0;
    let mut trace = ColumnTrace::default();
    let mut prev = f64::INFINITY;
    let mut forcing = if model.is_linear() { floor } else { INEXACT_MAX };
    for _ in 0..opts.max_iter.max(1) {
        let (a, b) = assemble_column(model, c, t, eq, &u);
        let (delta, out) = opts.linear.solve(&a, &b, forcing);
        u.iter_mut().zip(&delta).for_each(|(ui, di)| *ui += di);
        let upd = nrm2(&delta) / sqrt_n;
        trace.updates.push(upd);
        trace.linear_residuals.push(out.rel_residual);
        trace.linear_iterations += out.iterations;
        if !upd.is_finite() || !u.iter().all(|v| v.is_finite()) {
            return Err(Error::NewtonNoConvergence { column: c, last_update: upd });
        }
        if model.is_linear() || upd <= opts.tol {
            return Ok((u, trace));
        }
        let scale = (nrm2(&u) / sqrt_n).max(1.0);
        if upd <= opts.stall_tol * scale && upd > 0.5 * prev {
            trace.stalled = true;
            return Ok((u, trace));
        }
        prev = upd;
        forcing = (upd / scale).clamp(floor, INEXACT_MAX);
    }
    let last = trace.updates.last().copied().unwrap_or(f64::INFINITY);
    let scale = (nrm2(&u) / sqrt_n).max(1.0);
    if last <= opts.stall_tol * scale {
        trace.stalled = true;
        return Ok((u, trace));
    }
    Err(Error::NewtonNoConvergence { column: c, last_update: last })
}

/// One advanced column with its DIRK stage slopes (empty for multistep).
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStep {
    pub v: Vec<f64>,
    pub stages: Vec<Vec<f64>>,
    pub trace: ColumnTrace,
}

/// Advances one column from `history[j−1] = v^{k−j}` by one step of `spec`.
///
/// `f_history[j−1] = F(v^{k−j})` is needed only where the multistep weight
/// on that level is nonzero. `t` is the time of `v^{k−1}`.
#[allow(clippy::too_many_arguments)]
pub fn advance_column<M: Model + ?Sized>(
    model: &M,
    c: usize,
    t: f64,
    spec: &SchemeSpec,
    dt: f64,
    history: &[&[f64]],
    f_history: &[&[f64]],
    opts: &NewtonOptions,
) -> Result<ColumnStep> {
    let v_prev = history.first().ok_or(Error::Startup { needed: 1, available: 0 })?;
    match spec.kind {
        SchemeKind::Multistep => {
            let eq = StageEquation::multistep(spec, dt, history, f_history)?;
            let (v, trace) = solve_stage_column(model, c, t + dt, &eq, v_prev.to_vec(), opts)?;
            Ok(ColumnStep { v, stages: Vec::new(), trace })
        }
        SchemeKind::Dirk => {
            let l = spec.steps_or_stages();
            let mut stages: Vec<Vec<f64>> = Vec::with_capacity(l);
            let mut trace = ColumnTrace::default();
            for stage in 0..l {
                let refs: Vec<&[f64]> = stages.iter().map(|k| k.as_slice()).collect();
                let eq = StageEquation::dirk_stage(spec, dt, stage, v_prev, &refs)?;
                let guess = match stages.last() {
                    Some(k) => k.clone(),
                    None => {
                        let mut f = vec![0.0; v_prev.len()];
                        model.rhs_column(v_prev, c, t, &mut f);
                        f
                    }
                };
                let (k, tr) = solve_stage_column(model, c, t + spec.nodes[stage] * dt, &eq, guess, opts)?;
                trace.absorb(tr);
                stages.push(k);
            }
            let refs: Vec<&[f64]> = stages.iter().map(|k| k.as_slice()).collect();
            let v = dirk_update(spec, dt, v_prev, &refs);
            Ok(ColumnStep { v, stages, trace })
        }
    }
}

/// Single FOM step for one-step schemes (Euler, AM2, DIRK).
pub fn fom_step<M: Model + ?Sized>(
    model: &M,
    v_prev: &DMatrix<f64>,
    spec: &SchemeSpec,
    dt: f64,
    t: f64,
    opts: &NewtonOptions,
) -> Result<(DMatrix<f64>, Vec<ColumnTrace>)> {
    if spec.kind == SchemeKind::Multistep && spec.steps_or_stages() > 1 {
        return Err(Error::Startup { needed: spec.steps_or_stages(), available: 1 });
    }
    validate_step(dt, opts)?;
    let needs_f = spec.kind == SchemeKind::Multistep && spec.beta_back(1) != 0.0;
    let results: Vec<Result<ColumnStep>> = (0..v_prev.ncols())
        .into_par_iter()
        .map(|c| {
            let col = v_prev.column(c);
            let h = [col.as_slice()];
            let mut f = Vec::new();
            if needs_f {
                f = vec![0.0; col.len()];
                model.rhs_column(col.as_slice(), c, t, &mut f);
            }
            let fh = [f.as_slice()];
            advance_column(model, c, t, spec, dt, &h, if needs_f { &fh } else { &[] }, opts)
        })
        .collect();
    collect_columns(v_prev.nrows(), results)
}

fn validate_step(dt: f64, opts: &NewtonOptions) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput("Newton tolerance must be positive".into()));
    }
    Ok(())
}

fn collect_columns(n: usize, results: Vec<Result<ColumnStep>>) -> Result<(DMatrix<f64>, Vec<ColumnTrace>)> {
    let mut v = DMatrix::zeros(n, results.len());
    let mut traces = Vec::with_capacity(results.len());
    for (c, r) in results.into_iter().enumerate() {
        let step = r?;
        v.column_mut(c).copy_from_slice(&step.v);
        traces.push(step.trace);
    }
    Ok((v, traces))
}

/// Full-order integrator carrying the multistep history.
pub struct FomIntegrator<'m, M: Model + ?Sized> {
    model: &'m M,
    spec: SchemeSpec,
    startup: Option<SchemeSpec>,
    dt: f64,
    opts: NewtonOptions,
    history: VecDeque<DMatrix<f64>>,
    f_history: VecDeque<DMatrix<f64>>,
    t: f64,
    steps: usize,
}

impl<'m, M: Model + ?Sized> FomIntegrator<'m, M> {
    pub fn new(
        model: &'m M,
        v0: DMatrix<f64>,
        spec: SchemeSpec,
        dt: f64,
        t0: f64,
        opts: NewtonOptions,
    ) -> Result<Self> {
        validate_step(dt, &opts)?;
        if v0.nrows() != model.n() || v0.ncols() != model.samples() {
            return Err(Error::InvalidInput("initial condition shape does not match the model".into()));
        }
        let startup = spec.startup();
        let mut me = FomIntegrator {
            model,
            spec,
            startup,
            dt,
            opts,
            history: VecDeque::new(),
            f_history: VecDeque::new(),
            t: t0,
            steps: 0,
        };
        me.push(v0);
        Ok(me)
    }

    pub fn current(&self) -> &DMatrix<f64> {
        &self.history[0]
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    fn needs_f(&self) -> bool {
        self.spec.kind == SchemeKind::Multistep && (1..self.spec.a.len()).any(|j| self.spec.beta_back(j) != 0.0)
    }

    fn push(&mut self, v: DMatrix<f64>) {
        let keep = self.spec.steps_or_stages().max(1);
        if self.needs_f() {
            let f = self.model.rhs_matrix(&v, self.t);
            self.f_history.push_front(f);
            self.f_history.truncate(keep);
        }
        self.history.push_front(v);
        self.history.truncate(keep);
    }

    /// Advances all columns by one step; returns the per-column traces.
    pub fn step(&mut self) -> Result<Vec<ColumnTrace>> {
        let l = self.spec.steps_or_stages();
        let spec = if self.spec.kind == SchemeKind::Multistep && self.history.len() < l {
            self.startup.as_ref().expect("multistep startup scheme")
        } else {
            &self.spec
        };
        let model = self.model;
        let (dt, t, opts) = (self.dt, self.t, &self.opts);
        let (n, s) = self.history[0].shape();
        let history = &self.history;
        let f_history = &self.f_history;
        let depth = match spec.kind {
            SchemeKind::Multistep => spec.steps_or_stages(),
            SchemeKind::Dirk => 1,
        };
        let results: Vec<Result<ColumnStep>> = (0..s)
            .into_par_iter()
            .map(|c| {
                let h: Vec<&[f64]> = history.iter().take(depth).map(|m| crate::linalg::col_slice(m, c)).collect();
                let f: Vec<&[f64]> = f_history.iter().take(depth).map(|m| crate::linalg::col_slice(m, c)).collect();
                advance_column(model, c, t, spec, dt, &h, &f, opts)
            })
            .collect();
        let (v, traces) = collect_columns(n, results)?;
        self.t += self.dt;
        self.steps += 1;
        self.push(v);
        Ok(traces)
    }
}

/// `e^{L t} V_0` by Padé scaling-and-squaring (dense, `n ≤ 1024`).
pub fn exact_linear_solution(l: &DMatrix<f64>, v0: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let n = l.nrows();
    if l.ncols() != n || v0.nrows() != n {
        return Err(Error::InvalidInput("operator and initial condition shapes disagree".into()));
    }
    if n > EXPM_MAX_N {
        return Err(Error::Capability(format!(
            "dense exponential limited to n <= {EXPM_MAX_N} (got {n}); use rk4_reference"
        )));
    }
    if t == 0.0 {
        return Ok(v0.clone());
    }
    let e = (l * t).exp();
    Ok(e * v0)
}

/// Classical RK4 applied column-wise from `t = 0` to `T`.
pub fn rk4_reference<M: Model + ?Sized>(model: &M, v0: &DMatrix<f64>, dt: f64, t_final: f64) -> Result<DMatrix<f64>> {
    if !(dt > 0.0) || t_final < 0.0 {
        return Err(Error::InvalidInput("rk4 needs dt > 0 and T >= 0".into()));
    }
    let nsteps = (t_final / dt - 1e-9).ceil().max(0.0) as usize;
    let n = v0.nrows();
    let results: Vec<Result<Vec<f64>>> = (0..v0.ncols())
        .into_par_iter()
        .map(|c| {
            let mut v = v0.column(c).as_slice().to_vec();
            let mut k1 = vec![0.0; n];
            let mut k2 = vec![0.0; n];
            let mut k3 = vec![0.0; n];
            let mut k4 = vec![0.0; n];
            let mut w = vec![0.0; n];
            let mut t = 0.0;
            for step in 0..nsteps {
                let h = dt.min(t_final - t);
                model.rhs_column(&v, c, t, &mut k1);
                w.iter_mut().zip(&v).zip(&k1).for_each(|((wi, vi), ki)| *wi = vi + 0.5 * h * ki);
                model.rhs_column(&w, c, t + 0.5 * h, &mut k2);
                w.iter_mut().zip(&v).zip(&k2).for_each(|((wi, vi), ki)| *wi = vi + 0.5 * h * ki);
                model.rhs_column(&w, c, t + 0.5 * h, &mut k3);
                w.iter_mut().zip(&v).zip(&k3).for_each(|((wi, vi), ki)| *wi = vi + h * ki);
                model.rhs_column(&w, c, t + h, &mut k4);
                for i in 0..n {
                    v[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                t += h;
                if step % 16 == 15 || step + 1 == nsteps {
                    let mag = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                    if !mag.is_finite() || mag > 1e100 {
                        return Err(Error::Stability { step: step + 1, t });
                    }
                }
            }
            Ok(v)
        })
        .collect();
    let mut out = DMatrix::zeros(n, v0.ncols());
    for (c, r) in results.into_iter().enumerate() {
        out.column_mut(c).copy_from_slice(&r?);
    }
    Ok(out)
}

/// `‖V_ref − V‖_F / ‖V_ref‖_F`.
pub fn relative_error(v_ref: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<f64> {
    if v_ref.shape() != v.shape() {
        return Err(Error::Metric(format!("shape mismatch {:?} vs {:?}", v_ref.shape(), v.shape())));
    }
    let nrm = v_ref.norm();
    if nrm == 0.0 {
        return Err(Error::Metric("reference has zero norm".into()));
    }
    Ok((v_ref - v).norm() / nrm)
}
