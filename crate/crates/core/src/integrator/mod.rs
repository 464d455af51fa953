//! Implicit TDB-CUR time stepping.
//!
//! One step selects columns `s` by DEIM on `Y^{k−1}`, advances them with the
//! full per-column Newton solver, builds a correction basis `U_δ` from the
//! advanced columns, selects rows `p` by DEIM on `U_δ` with optional
//! oversampling, solves for `V^k(p,:)` with a reduced Newton iteration, and
//! assembles the new factorization with the stable CUR.

mod oracle;
mod rows;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

pub use oracle::{solve_rows_least_squares_oracle, OracleSolution, ORACLE_MAX_N};
pub use rows::{solve_rows, RowSolution};

use crate::error::{Error, Result};
use crate::factorization::{stable_cur, truncated_svd, LowRankState, TruncationRule};
use crate::fom::{advance_column, FomIntegrator, NewtonOptions};
use crate::model::Model;
use crate::sampling::{find_adjacent, oversample, SelectionIndices, Selector};
use crate::schemes::{SchemeKind, SchemeSpec};

/// Extra per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Diagnostics {
    #[default]
    Off,
    /// Row-collocated residual per row-Newton iterate (multistep only).
    Rows,
    /// Also the residual at all entries of the CUR of each iterate (multistep, small `n`).
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TdbCurOptions {
    /// Oversampled row count `e`.
    pub e: usize,
    /// Row-Newton cut-off on `‖Δv(p)‖₂ / |p|`.
    pub eps_t: f64,
    pub row_max_iter: usize,
    pub selector: Selector,
    pub column_newton: NewtonOptions,
    pub machine_eps: f64,
    pub diagnostics: Diagnostics,
}

impl Default for TdbCurOptions {
    fn default() -> Self {
        TdbCurOptions {
            e: 0,
            eps_t: 1e-14,
            row_max_iter: 6,
            selector: Selector::Deim,
            column_newton: NewtonOptions::default(),
            machine_eps: f64::EPSILON,
            diagnostics: Diagnostics::Off,
        }
    }
}

/// Keeps `ε̂ = σ_r / ‖σ‖` inside `[eps_l, eps_u]` by changing the rank one at a time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankController {
    pub eps_l: f64,
    pub eps_u: f64,
    pub r_min: usize,
    pub r_max: usize,
}

impl RankController {
    pub fn new(eps_l: f64, eps_u: f64, r_min: usize, r_max: usize) -> Result<Self> {
        let c = RankController { eps_l, eps_u, r_min, r_max };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_l > 0.0 && self.eps_l < self.eps_u) {
            return Err(Error::Config(format!(
                "rank thresholds need 0 < eps_l < eps_u, got {} and {}",
                self.eps_l, self.eps_u
            )));
        }
        if self.r_min == 0 || self.r_min > self.r_max {
            return Err(Error::Config(format!(
                "rank bounds need 1 <= r_min <= r_max, got {} and {}",
                self.r_min, self.r_max
            )));
        }
        Ok(())
    }

    /// Target rank for the next step given the current rank and proxy.
    pub fn next_rank(&self, r: usize, proxy: f64) -> usize {
        let want = if proxy > self.eps_u {
            r + 1
        } else if proxy < self.eps_l {
            r.saturating_sub(1)
        } else {
            r
        };
        let clamped = want.clamp(self.r_min, self.r_max);
        if clamped != want {
            log::warn!("rank {want} outside [{}, {}], clamped to {clamped}", self.r_min, self.r_max);
        }
        clamped
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankPolicy {
    Fixed(usize),
    Adaptive(RankController),
}

impl RankPolicy {
    fn validate(&self) -> Result<()> {
        match self {
            RankPolicy::Fixed(0) => Err(Error::Config("rank must be at least 1".into())),
            RankPolicy::Fixed(_) => Ok(()),
            RankPolicy::Adaptive(c) => c.validate(),
        }
    }

    fn next_rank(&self, r: usize, proxy: f64) -> usize {
        match self {
            RankPolicy::Fixed(r0) => *r0,
            RankPolicy::Adaptive(c) => c.next_rank(r, proxy),
        }
    }
}

/// Orthonormal basis of the sampled column updates.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionBasis {
    pub u_delta: DMatrix<f64>,
    pub sigma_delta: DVector<f64>,
    pub r_delta: usize,
}

/// Residual norms per row-Newton iterate; iterate 1 is the initial guess.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualTrace {
    /// `‖R(p,:)‖_F / (|p| s)`.
    pub rows: Vec<f64>,
    /// `‖R‖_F / (n s)` of the CUR assembled from each iterate.
    pub full: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub t: f64,
    pub rank: usize,
    pub r_delta: usize,
    /// Target rank of the following step.
    pub next_rank: usize,
    pub selection: SelectionIndices,
    pub column_iterations: Vec<usize>,
    pub row_iterations: Vec<usize>,
    /// `‖R(p,c)‖₂` per column at the accepted row iterate.
    pub row_residuals: Vec<f64>,
    pub error_proxy: f64,
    pub wall_time: f64,
    pub scheme_id: &'static str,
    pub residual_trace: Option<ResidualTrace>,
}

/// Column indices for the next step.
///
/// DEIM on the leading `target` columns of `Y`; a rank increase beyond the
/// width of `Y` is served by GappyPOD+E oversampling on `Y`.
pub fn select_columns(state: &LowRankState, target: usize, selector: Selector) -> Result<Vec<usize>> {
    let (n, s, r) = (state.n(), state.s(), state.rank());
    if target == 0 || target > n.min(s) {
        return Err(Error::Config(format!("target rank {target} must be in 1..={}", n.min(s))));
    }
    if target <= r {
        let y = state.y.columns(0, target).into_owned();
        selector.select(&y)
    } else {
        let base = selector.select(&state.y)?;
        oversample(&state.y, &base, target - r)
    }
}

/// Columns of the new state at `s`, DIRK stage slopes at `s`, and traces.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvancedColumns {
    pub v: DMatrix<f64>,
    /// `K^l(:,s)` for each DIRK stage; empty for multistep.
    pub stages: Vec<DMatrix<f64>>,
    pub iterations: Vec<usize>,
}

/// Advances columns `s` of the previous states with the full-order column solver.
pub fn advance_columns<M: Model + ?Sized>(
    model: &M,
    history: &[LowRankState],
    s: &[usize],
    spec: &SchemeSpec,
    dt: f64,
    opts: &NewtonOptions,
) -> Result<AdvancedColumns> {
    let depth = match spec.kind {
        SchemeKind::Multistep => spec.steps_or_stages(),
        SchemeKind::Dirk => 1,
    };
    if history.len() < depth {
        return Err(Error::Startup { needed: depth, available: history.len() });
    }
    let t = history[0].t;
    let levels: Vec<DMatrix<f64>> = history[..depth].iter().map(|h| h.columns(s)).collect();
    let n = model.n();
    let results: Vec<Result<crate::fom::ColumnStep>> = s
        .par_iter()
        .enumerate()
        .map(|(k, &c)| {
            let cols: Vec<&[f64]> = levels.iter().map(|l| crate::linalg::col_slice(l, k)).collect();
            let mut fh: Vec<Vec<f64>> = Vec::new();
            if spec.kind == SchemeKind::Multistep {
                for (j, col) in cols.iter().enumerate() {
                    let mut f = Vec::new();
                    if spec.beta_back(j + 1) != 0.0 {
                        f = vec![0.0; n];
                        model.rhs_column(col, c, history[j].t, &mut f);
                    }
                    fh.push(f);
                }
            }
            let frefs: Vec<&[f64]> = fh.iter().map(|f| f.as_slice()).collect();
            advance_column(model, c, t, spec, dt, &cols, &frefs, opts)
        })
        .collect();
    let nst = if spec.kind == SchemeKind::Dirk { spec.steps_or_stages() } else { 0 };
    let mut v = DMatrix::zeros(n, s.len());
    let mut stages = vec![DMatrix::zeros(n, s.len()); nst];
    let mut iterations = Vec::with_capacity(s.len());
    for (k, r) in results.into_iter().enumerate() {
        let col = r?;
        v.column_mut(k).copy_from_slice(&col.v);
        for (l, kl) in col.stages.iter().enumerate() {
            stages[l].column_mut(k).copy_from_slice(kl);
        }
        iterations.push(col.trace.iterations());
    }
    Ok(AdvancedColumns { v, stages, iterations })
}

/// Penrose-truncated SVD of `[cols_prev, cols_new, stages…]`.
pub fn build_correction_basis(
    cols_prev: Option<&DMatrix<f64>>,
    cols_new: &DMatrix<f64>,
    stages: &[DMatrix<f64>],
    machine_eps: f64,
) -> Result<CorrectionBasis> {
    let n = cols_new.nrows();
    let blocks: Vec<&DMatrix<f64>> = cols_prev.into_iter().chain(std::iter::once(cols_new)).chain(stages).collect();
    if blocks.iter().any(|b| b.nrows() != n) {
        return Err(Error::InvalidInput("correction blocks differ in row count".into()));
    }
    let total: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut vd = DMatrix::zeros(n, total);
    let mut off = 0;
    for b in blocks {
        vd.columns_mut(off, b.ncols()).copy_from(b);
        off += b.ncols();
    }
    if vd.iter().all(|&x| x == 0.0) {
        return Err(Error::RankDeficient { context: "correction basis of all-zero columns".into() });
    }
    let rule = TruncationRule { machine_eps, ..TruncationRule::penrose() };
    let svd = truncated_svd(&vd, &rule)?;
    let r_delta = svd.rank();
    Ok(CorrectionBasis { u_delta: svd.u, sigma_delta: svd.sigma, r_delta })
}

/// Correction-basis blocks for one step.
fn correction_blocks(
    spec: &SchemeSpec,
    prev: &LowRankState,
    s: &[usize],
    adv: &AdvancedColumns,
) -> (Option<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    match spec.kind {
        SchemeKind::Multistep => (Some(prev.columns(s)), Vec::new()),
        SchemeKind::Dirk => (None, adv.stages.clone()),
    }
}

/// One TDB-CUR step from `history` (newest first) at target rank `target`.
pub fn step<M: Model + ?Sized>(
    model: &M,
    history: &[LowRankState],
    spec: &SchemeSpec,
    dt: f64,
    target: usize,
    policy: &RankPolicy,
    opts: &TdbCurOptions,
) -> Result<(LowRankState, StepReport)> {
    let start = Instant::now();
    let prev = history.first().ok_or(Error::Startup { needed: 1, available: 0 })?;
    let n = model.n();
    if prev.n() != n || prev.s() != model.samples() {
        return Err(Error::InvalidInput(format!(
            "state is {}x{}, model is {}x{}",
            prev.n(),
            prev.s(),
            n,
            model.samples()
        )));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }

    let s = select_columns(prev, target, opts.selector)?;
    let adv = advance_columns(model, history, &s, spec, dt, &opts.column_newton)?;
    let (cols_prev, stages) = correction_blocks(spec, prev, &s, &adv);
    let basis = build_correction_basis(cols_prev.as_ref(), &adv.v, &stages, opts.machine_eps)?;

    let np = n.min((basis.r_delta + opts.e).max(target));
    let base = crate::sampling::deim(&basis.u_delta)?;
    let p = oversample(&basis.u_delta, &base, np - basis.r_delta)?;
    let p_a = find_adjacent(&p, n, |i, out| model.neighbors(i, out))?;

    let record = opts.diagnostics != Diagnostics::Off && spec.kind == SchemeKind::Multistep;
    let rows = solve_rows(model, history, &basis, &p, &p_a, spec, dt, opts.eps_t, opts.row_max_iter, record)?;
    let state = stable_cur(&adv.v, &rows.v_p, &p)?.with_time(prev.t + dt);

    let residual_trace = if record {
        Some(residual_trace(model, history, spec, dt, &adv.v, &p, &rows, opts.diagnostics == Diagnostics::Full)?)
    } else {
        None
    };

    let proxy = state.error_proxy();
    let rank = state.rank();
    let next_rank = policy.next_rank(rank, proxy).min(n.min(prev.s()));
    let selection = SelectionIndices { s, p, p_a, e: np - basis.r_delta };
    let report = StepReport {
        step: 0,
        t: state.t,
        rank,
        r_delta: basis.r_delta,
        next_rank,
        selection,
        column_iterations: adv.iterations,
        row_iterations: rows.iterations,
        row_residuals: rows.final_residual,
        error_proxy: proxy,
        wall_time: start.elapsed().as_secs_f64(),
        scheme_id: spec.id,
        residual_trace,
    };
    Ok((state, report))
}

/// Residual traces over the row-Newton iterates of a multistep step.
#[allow(clippy::too_many_arguments)]
fn residual_trace<M: Model + ?Sized>(
    model: &M,
    history: &[LowRankState],
    spec: &SchemeSpec,
    dt: f64,
    cols_new: &DMatrix<f64>,
    p: &[usize],
    rows: &RowSolution,
    full: bool,
) -> Result<ResidualTrace> {
    let s = rows.residual_history.len();
    let iters = rows.residual_history.iter().map(Vec::len).max().unwrap_or(0);
    let at = |h: &Vec<f64>, i: usize| h[i.min(h.len() - 1)];
    let row_trace: Vec<f64> = (0..iters)
        .map(|i| {
            let sq: f64 = rows.residual_history.iter().map(|h| at(h, i).powi(2)).sum();
            sq.sqrt() / (p.len() * s) as f64
        })
        .collect();
    let full_trace = if full {
        let n = model.n();
        if n > ORACLE_MAX_N {
            return Err(Error::Capability(format!("full residual trace needs n <= {ORACLE_MAX_N}, got {n}")));
        }
        let its = rows.iterates.as_ref().expect("iterates recorded");
        let l = spec.steps_or_stages();
        let t = history[0].t + dt;
        let mut g = DMatrix::zeros(n, s);
        for (j, h) in history.iter().take(l).enumerate() {
            let v = h.reconstruct();
            g += &v * spec.alpha_back(j + 1);
            if spec.beta_back(j + 1) != 0.0 {
                g -= model.rhs_matrix(&v, h.t) * (dt * spec.beta_back(j + 1));
            }
        }
        let gamma = dt * spec.beta_back(0);
        let mut out = Vec::with_capacity(iters);
        for i in 0..iters {
            let mut vp = DMatrix::zeros(p.len(), s);
            for (c, col) in its.iter().enumerate() {
                vp.column_mut(c).copy_from_slice(&col[i.min(col.len() - 1)]);
            }
            let v = stable_cur(cols_new, &vp, p)?.reconstruct();
            let r = &v + &g - model.rhs_matrix(&v, t) * gamma;
            out.push(r.norm() / (n * s) as f64);
        }
        Some(out)
    } else {
        None
    };
    Ok(ResidualTrace { rows: row_trace, full: full_trace })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrateConfig {
    pub spec: SchemeSpec,
    pub dt: f64,
    pub t_final: f64,
    pub policy: RankPolicy,
    /// Initial rank; defaults to the fixed rank, or the `eps_u` truncation rank when adaptive.
    pub r0: Option<usize>,
    /// Full-order integration up to this time before switching to low rank.
    pub warmup: Option<f64>,
    pub opts: TdbCurOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrateOutput {
    pub state: LowRankState,
    /// State at the start of the low-rank phase.
    pub initial: LowRankState,
    pub reports: Vec<StepReport>,
    pub warmup_steps: usize,
}

fn initial_rank(v: &DMatrix<f64>, cfg: &IntegrateConfig) -> Result<usize> {
    let cap = v.nrows().min(v.ncols());
    let r = match (cfg.r0, &cfg.policy) {
        (Some(r), _) => r,
        (None, RankPolicy::Fixed(r)) => *r,
        (None, RankPolicy::Adaptive(c)) => {
            let rule = TruncationRule::threshold_pair(c.eps_l, c.eps_u);
            let sv = crate::factorization::singular_values(v);
            rule.rank_for(&sv, v.nrows(), v.ncols())?.clamp(c.r_min, c.r_max)
        }
    };
    if r == 0 || r > cap {
        return Err(Error::Config(format!("initial rank {r} must be in 1..={cap}")));
    }
    Ok(r)
}

fn truncate(v: &DMatrix<f64>, r: usize, t: f64, eps: f64) -> Result<LowRankState> {
    let rule = TruncationRule { machine_eps: eps, ..TruncationRule::fixed_rank(r) };
    Ok(truncated_svd(v, &rule)?.with_time(t))
}

/// Integrates `dV/dt = F(V)` from `v0` at `t = 0` up to `cfg.t_final`.
///
/// `observer` sees every low-rank step after it completes; an error from it
/// aborts the run.
pub fn integrate<M, O>(model: &M, v0: &DMatrix<f64>, cfg: &IntegrateConfig, mut observer: O) -> Result<IntegrateOutput>
where
    M: Model + ?Sized,
    O: FnMut(&LowRankState, &StepReport) -> Result<()>,
{
    cfg.policy.validate()?;
    if !(cfg.dt > 0.0) || !cfg.dt.is_finite() || !(cfg.t_final >= 0.0) {
        return Err(Error::Config(format!("need dt > 0 and T >= 0, got {} and {}", cfg.dt, cfg.t_final)));
    }
    if v0.nrows() != model.n() || v0.ncols() != model.samples() {
        return Err(Error::InvalidInput("initial condition does not match the model".into()));
    }
    let eps = cfg.opts.machine_eps;
    let nsteps = (cfg.t_final / cfg.dt).round() as usize;
    let spec = &cfg.spec;
    let depth = match spec.kind {
        SchemeKind::Multistep => spec.steps_or_stages(),
        SchemeKind::Dirk => 1,
    };

    let mut history: Vec<LowRankState> = Vec::with_capacity(depth);
    let mut warmup_steps = 0;
    if let Some(tw) = cfg.warmup.filter(|&tw| tw > 0.0) {
        warmup_steps = ((tw / cfg.dt).round() as usize).min(nsteps);
        let mut fom = FomIntegrator::new(model, v0.clone(), spec.clone(), cfg.dt, 0.0, cfg.opts.column_newton.clone())?;
        let mut last: Vec<(DMatrix<f64>, f64)> = vec![(v0.clone(), 0.0)];
        for _ in 0..warmup_steps {
            fom.step()?;
            last.insert(0, (fom.current().clone(), fom.t()));
            last.truncate(depth);
        }
        let r = initial_rank(&last[0].0, cfg)?;
        for (v, t) in &last {
            history.push(truncate(v, r, *t, eps)?);
        }
    } else {
        let r = initial_rank(v0, cfg)?;
        history.push(truncate(v0, r, 0.0, eps)?);
    }
    let initial = history[0].clone();
    let mut target = initial.rank();
    let mut reports = Vec::with_capacity(nsteps - warmup_steps);
    let startup = spec.startup();
    for k in warmup_steps..nsteps {
        let use_spec = if history.len() < depth { startup.as_ref().unwrap_or(spec) } else { spec };
        let (state, mut report) = step(model, &history, use_spec, cfg.dt, target, &cfg.policy, &cfg.opts)?;
        report.step = k + 1;
        if (report.next_rank as isize - report.rank as isize).abs() > 1 {
            log::warn!("rank jump {} -> {}", report.rank, report.next_rank);
        }
        target = report.next_rank;
        observer(&state, &report)?;
        history.insert(0, state);
        history.truncate(depth);
        reports.push(report);
    }
    Ok(IntegrateOutput { state: history.swap_remove(0), initial, reports, warmup_steps })
}
