//! Run orchestration for the four subcommands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use serde_json::json;
use tdbcur::factorization::singular_values;
use tdbcur::{
    build_model, exact_linear_solution, integrate, relative_error, rk4_reference, scheme_table, FomIntegrator, Model,
    SchemeName, SchemeSpec, StepReport, TruncationRule,
};

use crate::config::{steps_for, ReferenceKind, RunConfig};
use crate::output::{self, float, opt, Table};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Sweep,
    Compare,
    Fom,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Sweep => "sweep",
            Command::Compare => "compare",
            Command::Fom => "fom",
        }
    }
}

/// Files written by a command.
#[derive(Debug, Clone, Default)]
pub struct Summary {
    pub files: Vec<PathBuf>,
}

pub fn execute(cmd: Command, cfg: &RunConfig, out: &Path, threads: usize) -> Result<Summary, CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let model = build_model(&cfg.model.name, &cfg.model.params(), cfg.seed).map_err(CliError::config)?;
    let model = model.as_ref();
    let mut files = match cmd {
        Command::Run => match &cfg.sweep {
            Some(sw) if sw.ranks.is_empty() => return Err(CliError::Config("sweep.ranks is empty".into())),
            Some(_) => rank_sweep(model, cfg, out)?,
            None => low_rank_run(model, cfg, out, reference_kind(model, cfg))?,
        },
        Command::Compare => low_rank_run(model, cfg, out, ReferenceKind::Fom)?,
        Command::Sweep => dt_sweep(model, cfg, out)?,
        Command::Fom => fom_run(model, cfg, out)?,
    };
    files.push(write_metadata(cmd, model, cfg, out, threads, &files)?);
    Ok(Summary { files })
}

fn reference_kind(model: &dyn Model, cfg: &RunConfig) -> ReferenceKind {
    cfg.reference.kind.unwrap_or(if model.is_linear() && model.n() <= tdbcur::fom::EXPM_MAX_N {
        ReferenceKind::Exact
    } else {
        ReferenceKind::Fom
    })
}

/// Reference trajectory sampled at the integrator's step times.
enum Reference<'m> {
    None,
    Exact { propagator: DMatrix<f64>, v: DMatrix<f64>, steps: usize },
    Fom(Box<FomIntegrator<'m, dyn Model + 'm>>),
    Rk4 { model: &'m dyn Model, v: DMatrix<f64>, steps: usize, dt: f64, h: f64 },
}

impl<'m> Reference<'m> {
    fn new(
        kind: ReferenceKind,
        model: &'m dyn Model,
        cfg: &RunConfig,
        spec: &SchemeSpec,
        dt: f64,
    ) -> Result<Self, CliError> {
        let v0 = model.initial_condition();
        Ok(match kind {
            ReferenceKind::None => Reference::None,
            ReferenceKind::Exact => {
                if !model.is_linear() {
                    return Err(CliError::Config(format!(
                        "no exact reference for the nonlinear model '{}'",
                        model.name()
                    )));
                }
                let l = linear_operator(model);
                let propagator = exact_linear_solution(&l, &DMatrix::identity(l.nrows(), l.nrows()), dt)
                    .map_err(CliError::solver)?;
                Reference::Exact { propagator, v: v0, steps: 0 }
            }
            ReferenceKind::Fom => {
                let opts = cfg.options()?.column_newton;
                let fom = FomIntegrator::new(model, v0, spec.clone(), dt, 0.0, opts).map_err(CliError::solver)?;
                Reference::Fom(Box::new(fom))
            }
            ReferenceKind::Rk4 => Reference::Rk4 { model, v: v0, steps: 0, dt: cfg.reference.dt, h: dt },
        })
    }

    fn is_some(&self) -> bool {
        !matches!(self, Reference::None)
    }

    /// Advances to step `k`; returns the state and the seconds spent in full-order steps.
    fn at(&mut self, k: usize) -> Result<(Option<&DMatrix<f64>>, f64), CliError> {
        let mut secs = 0.0;
        match self {
            Reference::None => Ok((None, 0.0)),
            Reference::Exact { propagator, v, steps } => {
                while *steps < k {
                    *v = &*propagator * &*v;
                    *steps += 1;
                }
                Ok((Some(v), 0.0))
            }
            Reference::Fom(fom) => {
                while fom.steps_taken() < k {
                    let t0 = Instant::now();
                    fom.step().map_err(CliError::solver)?;
                    secs += t0.elapsed().as_secs_f64();
                }
                Ok((Some(fom.current()), secs))
            }
            Reference::Rk4 { model, v, steps, dt, h } => {
                // the built-in models are autonomous, so each interval restarts at t = 0
                while *steps < k {
                    *v = rk4_reference(*model, v, *dt, *h).map_err(CliError::solver)?;
                    *steps += 1;
                }
                Ok((Some(v), 0.0))
            }
        }
    }
}

fn linear_operator(model: &dyn Model) -> DMatrix<f64> {
    let zero = vec![0.0; model.n()];
    model.jacobian_csr(&zero, 0, 0.0).to_dense()
}

struct Tracker {
    last: Option<String>,
}

impl Tracker {
    fn note(&mut self, r: &StepReport) {
        self.last = Some(format!(
            "step {} (t = {}, rank {}, r_delta {}, next rank {}, error proxy {:e})",
            r.step, r.t, r.rank, r.r_delta, r.next_rank, r.error_proxy
        ));
    }

    fn fail(&self, e: tdbcur::Error) -> CliError {
        match e {
            tdbcur::Error::Config(m) => CliError::Config(m),
            e => CliError::Solver { message: e.to_string(), last_step: self.last.clone() },
        }
    }
}

fn low_rank_run(model: &dyn Model, cfg: &RunConfig, out: &Path, kind: ReferenceKind) -> Result<Vec<PathBuf>, CliError> {
    let icfg = cfg.integrate_config(None, None, None)?;
    let mut reference = Reference::new(kind, model, cfg, &icfg.spec, cfg.dt)?;
    let every = cfg.output.every;
    let nsv = cfg.output.singular_values;
    let mut err_t = Table::create(out, output::ERROR_VS_TIME)?;
    let mut svt = Table::create(out, output::SINGULAR_VALUES)?;
    let mut rank_t = Table::create(out, output::RANK_TRACE)?;
    let mut timing = Table::create(out, output::TIMING)?;
    let mut resid = match icfg.opts.diagnostics {
        tdbcur::Diagnostics::Off => None,
        _ => Some(Table::create(out, output::RESIDUAL_TRACE)?),
    };
    let mut tracker = Tracker { last: None };
    let mut io_err: Option<CliError> = None;
    let v0 = model.initial_condition();
    let compare = kind == ReferenceKind::Fom;

    let result = integrate(model, &v0, &icfg, |state, rep| {
        let mut body = || -> Result<(), CliError> {
            let write = rep.step % every == 0 || rep.step == steps_for(cfg.t_final, cfg.dt);
            let (vref, fom_secs) = if write || compare { reference.at(rep.step)? } else { (None, 0.0) };
            let fom_secs = if compare { Some(fom_secs) } else { None };
            timing.row([rep.step.to_string(), float(rep.t), float(rep.wall_time), opt(fom_secs)])?;
            rank_t.row([
                rep.step.to_string(),
                float(rep.t),
                rep.rank.to_string(),
                rep.r_delta.to_string(),
                rep.next_rank.to_string(),
                float(rep.error_proxy),
                rep.column_iterations.iter().max().copied().unwrap_or(0).to_string(),
                rep.row_iterations.iter().max().copied().unwrap_or(0).to_string(),
            ])?;
            if let (Some(t), Some(trace)) = (resid.as_mut(), rep.residual_trace.as_ref()) {
                for (i, r) in trace.rows.iter().enumerate() {
                    let full = trace.full.as_ref().map(|f| f[i]);
                    t.row([rep.step.to_string(), i.to_string(), float(*r), opt(full)])?;
                }
            }
            if write {
                let v = state.reconstruct();
                let e = vref.map(|r| relative_error(r, &v)).transpose().map_err(CliError::solver)?;
                err_t.row([rep.step.to_string(), float(rep.t), rep.rank.to_string(), opt(e)])?;
                let sv_ref = vref.map(singular_values);
                for i in 0..nsv.min(state.sigma.len().max(sv_ref.as_ref().map_or(0, |s| s.len()))) {
                    let a = sv_ref.as_ref().and_then(|s| s.get(i).copied());
                    let b = state.sigma.get(i).copied();
                    svt.row([float(rep.t), (i + 1).to_string(), opt(a), opt(b)])?;
                }
            }
            Ok(())
        };
        match body() {
            Ok(()) => {
                tracker.note(rep);
                Ok(())
            }
            Err(e) => {
                let msg = e.to_string();
                io_err = Some(e);
                Err(tdbcur::Error::Metric(msg))
            }
        }
    });
    if let Some(e) = io_err {
        return Err(e);
    }
    result.map_err(|e| tracker.fail(e))?;
    let mut files = vec![err_t.finish()?, svt.finish()?, rank_t.finish()?, timing.finish()?];
    if let Some(t) = resid {
        files.push(t.finish()?);
    }
    Ok(files)
}

fn final_error(
    model: &dyn Model,
    cfg: &RunConfig,
    scheme: SchemeName,
    dt: f64,
    r: usize,
    reference: &DMatrix<f64>,
) -> Result<f64, CliError> {
    let icfg = cfg.integrate_config(Some(scheme), Some(dt), Some(r))?;
    let mut tracker = Tracker { last: None };
    let out = integrate(model, &model.initial_condition(), &icfg, |_, rep| {
        tracker.note(rep);
        Ok(())
    })
    .map_err(|e| tracker.fail(e))?;
    relative_error(reference, &out.state.reconstruct()).map_err(CliError::solver)
}

/// Reference state at `t_final` for a given scheme and step.
fn final_reference(
    model: &dyn Model,
    cfg: &RunConfig,
    kind: ReferenceKind,
    scheme: SchemeName,
    dt: f64,
) -> Result<DMatrix<f64>, CliError> {
    let v0 = model.initial_condition();
    match kind {
        ReferenceKind::Exact => {
            if !model.is_linear() {
                return Err(CliError::Config("exact reference needs a linear model".into()));
            }
            exact_linear_solution(&linear_operator(model), &v0, cfg.t_final).map_err(CliError::solver)
        }
        ReferenceKind::Rk4 => rk4_reference(model, &v0, cfg.reference.dt, cfg.t_final).map_err(CliError::solver),
        ReferenceKind::Fom => {
            let opts = cfg.options()?.column_newton;
            let mut fom =
                FomIntegrator::new(model, v0, scheme_table(scheme), dt, 0.0, opts).map_err(CliError::solver)?;
            for _ in 0..steps_for(cfg.t_final, dt) {
                fom.step().map_err(CliError::solver)?;
            }
            Ok(fom.current().clone())
        }
        ReferenceKind::None => Err(CliError::Config("this command needs a reference solution".into())),
    }
}

fn rank_sweep(model: &dyn Model, cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let sw = cfg.sweep.as_ref().expect("sweep section");
    let kind = reference_kind(model, cfg);
    let mut table = Table::create(out, output::ERROR_VS_RANK)?;
    let mut cached: Option<DMatrix<f64>> = None;
    for scheme in cfg.sweep_schemes()? {
        let reference = match (kind, &cached) {
            (ReferenceKind::Fom, _) | (_, None) => {
                let r = final_reference(model, cfg, kind, scheme, cfg.dt)?;
                if kind != ReferenceKind::Fom {
                    cached = Some(r.clone());
                }
                r
            }
            (_, Some(r)) => r.clone(),
        };
        for &r in &sw.ranks {
            let e = final_error(model, cfg, scheme, cfg.dt, r, &reference)?;
            log::info!("{scheme} r={r}: E = {e:e}");
            table.row([scheme.as_str().to_string(), r.to_string(), float(e)])?;
        }
    }
    Ok(vec![table.finish()?])
}

fn dt_sweep(model: &dyn Model, cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let sw = cfg.sweep.as_ref().ok_or_else(|| CliError::Config("sweep needs a [sweep] section".into()))?;
    if sw.dts.is_empty() {
        return Err(CliError::Config("sweep.dts is empty".into()));
    }
    let ranks = if sw.ranks.is_empty() {
        match cfg.rank.fixed {
            Some(r) => vec![r],
            None => return Err(CliError::Config("sweep needs sweep.ranks or rank.fixed".into())),
        }
    } else {
        sw.ranks.clone()
    };
    let kind = reference_kind(model, cfg);
    let mut table = Table::create(out, output::ERROR_VS_DT)?;
    let mut slopes = Table::create(out, output::SLOPES)?;
    let mut fixed_ref: Option<DMatrix<f64>> = None;
    for scheme in cfg.sweep_schemes()? {
        let mut errors = vec![Vec::new(); ranks.len()];
        for &dt in &sw.dts {
            let reference = match kind {
                ReferenceKind::Fom => final_reference(model, cfg, kind, scheme, dt)?,
                _ => match &fixed_ref {
                    Some(r) => r.clone(),
                    None => {
                        let r = final_reference(model, cfg, kind, scheme, dt)?;
                        fixed_ref = Some(r.clone());
                        r
                    }
                },
            };
            for (j, &r) in ranks.iter().enumerate() {
                let e = final_error(model, cfg, scheme, dt, r, &reference)?;
                log::info!("{scheme} r={r} dt={dt}: E = {e:e}");
                table.row([scheme.as_str().to_string(), r.to_string(), float(dt), float(e)])?;
                errors[j].push((dt, e));
            }
        }
        let range = sw.fit_range(scheme);
        for (j, &r) in ranks.iter().enumerate() {
            let fit: Vec<(f64, f64)> = errors[j]
                .iter()
                .copied()
                .filter(|(dt, _)| range.is_none_or(|[lo, hi]| *dt >= lo * (1.0 - 1e-12) && *dt <= hi * (1.0 + 1e-12)))
                .collect();
            let row = match output::fit_slope(&fit) {
                Some((s, n)) => [scheme.as_str().into(), r.to_string(), float(s), n.to_string(), "ok".into()],
                None => {
                    [scheme.as_str().into(), r.to_string(), "nan".into(), fit.len().to_string(), "undefined".into()]
                }
            };
            if row[4] == "undefined" {
                log::warn!("{scheme} r={r}: slope undefined (zero, non-finite or too few errors in the fit range)");
            }
            slopes.row(row)?;
        }
    }
    Ok(vec![table.finish()?, slopes.finish()?])
}

fn fom_run(model: &dyn Model, cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let spec = scheme_table(cfg.scheme_name()?);
    let opts = cfg.options()?.column_newton;
    let kind = match reference_kind(model, cfg) {
        ReferenceKind::Fom => ReferenceKind::None,
        k => k,
    };
    let mut reference = Reference::new(kind, model, cfg, &spec, cfg.dt)?;
    let mut fom =
        FomIntegrator::new(model, model.initial_condition(), spec, cfg.dt, 0.0, opts).map_err(CliError::solver)?;
    let nsteps = steps_for(cfg.t_final, cfg.dt);
    let mut err_t = reference.is_some().then(|| Table::create(out, output::ERROR_VS_TIME)).transpose()?;
    let mut svt = Table::create(out, output::SINGULAR_VALUES)?;
    let mut rank_t = Table::create(out, output::RANK_TRACE)?;
    let mut timing = Table::create(out, output::TIMING)?;
    let every = cfg.output.every;
    let penrose = TruncationRule::penrose();
    for k in 1..=nsteps {
        let t0 = Instant::now();
        let traces = fom.step().map_err(|e| CliError::Solver {
            message: e.to_string(),
            last_step: Some(format!("full-order step {} (t = {})", k - 1, fom.t())),
        })?;
        let secs = t0.elapsed().as_secs_f64();
        let t = fom.t();
        timing.row([k.to_string(), float(t), "nan".into(), float(secs)])?;
        if k % every != 0 && k != nsteps {
            continue;
        }
        let v = fom.current();
        let sv = singular_values(v);
        let rank = penrose.rank_for(&sv, v.nrows(), v.ncols()).map_err(CliError::solver)?;
        let iters = traces.iter().map(|t| t.iterations()).max().unwrap_or(0);
        rank_t.row([
            k.to_string(),
            float(t),
            rank.to_string(),
            "nan".into(),
            rank.to_string(),
            float(sv.get(rank.saturating_sub(1)).copied().unwrap_or(0.0) / v.norm().max(f64::MIN_POSITIVE)),
            iters.to_string(),
            "0".into(),
        ])?;
        let (vref, _) = reference.at(k)?;
        let sv_ref = vref.map(singular_values);
        if let (Some(t_err), Some(r)) = (err_t.as_mut(), vref) {
            let e = relative_error(r, v).map_err(CliError::solver)?;
            t_err.row([k.to_string(), float(t), rank.to_string(), float(e)])?;
        }
        for (i, &x) in sv.iter().take(cfg.output.singular_values).enumerate() {
            let a = sv_ref.as_ref().and_then(|s| s.get(i).copied());
            svt.row([float(t), (i + 1).to_string(), opt(a), float(x)])?;
        }
    }
    let mut files = Vec::new();
    if let Some(t) = err_t {
        files.push(t.finish()?);
    }
    files.extend([svt.finish()?, rank_t.finish()?, timing.finish()?]);
    Ok(files)
}

fn scheme_record(spec: &SchemeSpec) -> serde_json::Value {
    json!({
        "id": spec.id,
        "kind": format!("{:?}", spec.kind).to_lowercase(),
        "order": spec.order,
        "a": spec.a,
        "b": spec.b,
        "tableau": spec.tableau,
        "weights": spec.weights,
        "nodes": spec.nodes,
        "startup": spec.startup().map(|s| s.id),
    })
}

fn write_metadata(
    cmd: Command,
    model: &dyn Model,
    cfg: &RunConfig,
    out: &Path,
    threads: usize,
    files: &[PathBuf],
) -> Result<PathBuf, CliError> {
    let schemes: Vec<serde_json::Value> =
        cfg.sweep_schemes()?.into_iter().map(|s| scheme_record(&scheme_table(s))).collect();
    let model_info: serde_json::Map<String, serde_json::Value> =
        model.describe().into_iter().map(|(k, v)| (k, serde_json::Value::String(v))).collect();
    let kl = model_info.get("kl_kernel").cloned().unwrap_or_else(|| json!("not applicable"));
    let kl_modes = model_info.get("kl_modes").cloned().unwrap_or_else(|| json!("not applicable"));
    let reference = match cmd {
        Command::Compare => ReferenceKind::Fom,
        _ => reference_kind(model, cfg),
    };
    let record = json!({
        "tool": format!("tdbcur {}", env!("CARGO_PKG_VERSION")),
        "command": cmd.as_str(),
        "threads": threads,
        "config": cfg,
        "model": { "name": model.name(), "n": model.n(), "samples": model.samples(), "parameters": model_info },
        "schemes": schemes,
        "reference": format!("{reference:?}").to_lowercase(),
        "decisions": {
            "dirk_tableaus": "dirk2: SDIRK2 gamma = 1 - sqrt(2)/2; dirk3: Alexander 3-stage L-stable SDIRK; dirk4: Hairer-Wanner 5-stage stiffly accurate SDIRK, gamma = 1/4",
            "multistep_startup": "DIRK of matching order (order <= 2: dirk2, 3: dirk3, 4: dirk4)",
            "rank_increase": "DEIM on the previous right basis, augmented by GappyPOD+E oversampling when the target rank exceeds its width",
            "burgers_kl_kernel": kl,
            "burgers_kl_modes": kl_modes,
            "row_indices": "selected once per step before the row Newton loop",
            "multistep_correction_basis": "previous state reconstructed at the current column indices, joined with the advanced columns",
            "row_least_squares": "minimum-norm solution from a rank-revealing orthogonal factorization",
            "dirk_stage_guess": "stage 1 starts from the interpolant of F at the sampled rows in the correction basis; later stages from the previous stage",
            "column_newton": "inexact Newton with GMRES(50) and ILU(0), stopping at ||delta||_2/sqrt(n) <= tol or at a round-off stall",
            "linear_problems": "one Newton solve per column and per row system",
            "initial_rank": "rank.r0, else rank.fixed, else the eps_u truncation rank of the initial condition",
            "error_proxy": "sigma_r / ||sigma||_2 of the new state",
        },
        "outputs": files.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect::<Vec<_>>(),
    });
    let path = out.join("metadata.json");
    let text = serde_json::to_string_pretty(&record).expect("metadata serializes");
    std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}
