//! Run configuration read from TOML.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tdbcur::{
    scheme_table, Diagnostics, IntegrateConfig, LinearSolver, ModelParams, NewtonOptions, RankController, RankPolicy,
    SchemeName, Selector, TdbCurOptions,
};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub scheme: String,
    pub dt: f64,
    pub t_final: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub rank: RankConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub reference: ReferenceConfig,
    #[serde(default)]
    pub output: OutputConfig,
    pub sweep: Option<SweepConfig>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
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

impl ModelConfig {
    pub fn params(&self) -> ModelParams {
        ModelParams {
            n: self.n,
            nx: self.nx,
            ny: self.ny,
            s: self.s,
            d: self.d,
            alpha: self.alpha,
            nu: self.nu,
            eps1: self.eps1,
            eps2: self.eps2,
            beta0: self.beta0,
            sigma: self.sigma,
            corr_len: self.corr_len,
        }
    }
}

/// Either `fixed = r` or the pair `eps_l`, `eps_u`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankConfig {
    pub fixed: Option<usize>,
    pub eps_l: Option<f64>,
    pub eps_u: Option<f64>,
    #[serde(default = "one")]
    pub r_min: usize,
    pub r_max: Option<usize>,
    pub r0: Option<usize>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub e: usize,
    pub eps_t: f64,
    pub row_max_iter: usize,
    pub selector: String,
    pub linear: String,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub diagnostics: String,
    pub warmup: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = TdbCurOptions::default();
        SolverConfig {
            e: o.e,
            eps_t: o.eps_t,
            row_max_iter: o.row_max_iter,
            selector: "deim".into(),
            linear: "gmres".into(),
            newton_tol: o.column_newton.tol,
            newton_max_iter: o.column_newton.max_iter,
            diagnostics: "off".into(),
            warmup: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    /// Matrix exponential of a linear operator.
    Exact,
    /// Full-order model with the run's scheme and step.
    Fom,
    /// Classical RK4 at `reference.dt`.
    Rk4,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceConfig {
    pub kind: Option<ReferenceKind>,
    pub dt: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig { kind: None, dt: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Write time series every this many steps.
    pub every: usize,
    /// Leading singular values written per output time.
    pub singular_values: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { every: 1, singular_values: 10 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub schemes: Vec<String>,
    #[serde(default)]
    pub ranks: Vec<usize>,
    #[serde(default)]
    pub dts: Vec<f64>,
    /// Inclusive `[lo, hi]` of step sizes used in the slope fit.
    pub fit_dt: Option<[f64; 2]>,
    /// Per-scheme fit ranges, taking precedence over `fit_dt`.
    #[serde(default)]
    pub fit_dt_by_scheme: BTreeMap<String, [f64; 2]>,
}

impl SweepConfig {
    pub fn fit_range(&self, scheme: SchemeName) -> Option<[f64; 2]> {
        self.fit_dt_by_scheme.get(scheme.as_str()).copied().or(self.fit_dt)
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return bad(format!("t_final must be nonnegative, got {}", self.t_final));
        }
        for dt in std::iter::once(self.dt).chain(self.sweep.iter().flat_map(|s| s.dts.iter().copied())) {
            let k = self.t_final / dt;
            if (k - k.round()).abs() > 1e-9 * k.max(1.0) {
                return bad(format!("t_final {} is not a whole number of steps of {dt}", self.t_final));
            }
        }
        self.scheme_name()?;
        self.policy()?;
        self.options()?;
        if self.output.every == 0 {
            return bad("output.every must be at least 1".into());
        }
        if self.reference.kind == Some(ReferenceKind::Rk4) && !(self.reference.dt > 0.0) {
            return bad("reference.dt must be positive".into());
        }
        if let Some(sw) = &self.sweep {
            for s in &sw.schemes {
                s.parse::<SchemeName>().map_err(|e| CliError::Config(e.to_string()))?;
            }
            if sw.ranks.contains(&0) {
                return bad("sweep ranks must be at least 1".into());
            }
            if sw.dts.iter().any(|&d| !(d > 0.0)) {
                return bad("sweep step sizes must be positive".into());
            }
            for [lo, hi] in sw.fit_dt.iter().chain(sw.fit_dt_by_scheme.values()) {
                if !(*lo > 0.0 && lo <= hi) {
                    return bad(format!("fit range [{lo}, {hi}] is not a range"));
                }
            }
            for s in sw.fit_dt_by_scheme.keys() {
                s.parse::<SchemeName>().map_err(|e| CliError::Config(e.to_string()))?;
            }
        }
        Ok(())
    }

    pub fn scheme_name(&self) -> Result<SchemeName, CliError> {
        self.scheme.parse().map_err(|e: tdbcur::Error| CliError::Config(e.to_string()))
    }

    /// Schemes of a sweep, falling back to the run's scheme.
    pub fn sweep_schemes(&self) -> Result<Vec<SchemeName>, CliError> {
        match &self.sweep {
            Some(sw) if !sw.schemes.is_empty() => sw
                .schemes
                .iter()
                .map(|s| s.parse().map_err(|e: tdbcur::Error| CliError::Config(e.to_string())))
                .collect(),
            _ => Ok(vec![self.scheme_name()?]),
        }
    }

    pub fn policy(&self) -> Result<RankPolicy, CliError> {
        let r = &self.rank;
        match (r.fixed, r.eps_l, r.eps_u) {
            (Some(k), None, None) => {
                if k == 0 {
                    return Err(CliError::Config("rank.fixed must be at least 1".into()));
                }
                Ok(RankPolicy::Fixed(k))
            }
            (None, Some(lo), Some(hi)) => {
                let r_max = r.r_max.unwrap_or(usize::MAX);
                let c = RankController::new(lo, hi, r.r_min, r_max).map_err(|e| CliError::Config(e.to_string()))?;
                Ok(RankPolicy::Adaptive(c))
            }
            _ => Err(CliError::Config("rank needs either `fixed` or both `eps_l` and `eps_u`".into())),
        }
    }

    pub fn options(&self) -> Result<TdbCurOptions, CliError> {
        let s = &self.solver;
        let selector = match s.selector.as_str() {
            "deim" => Selector::Deim,
            "qdeim" => Selector::Qdeim,
            other => return Err(CliError::Config(format!("unknown selector '{other}'"))),
        };
        let linear = match s.linear.as_str() {
            "gmres" => LinearSolver::default(),
            "dense" => LinearSolver::Dense,
            other => return Err(CliError::Config(format!("unknown linear solver '{other}'"))),
        };
        let diagnostics = match s.diagnostics.as_str() {
            "off" => Diagnostics::Off,
            "rows" => Diagnostics::Rows,
            "full" => Diagnostics::Full,
            other => return Err(CliError::Config(format!("unknown diagnostics level '{other}'"))),
        };
        if !(s.eps_t > 0.0) || s.row_max_iter == 0 || !(s.newton_tol > 0.0) || s.newton_max_iter == 0 {
            return Err(CliError::Config("solver tolerances and iteration caps must be positive".into()));
        }
        Ok(TdbCurOptions {
            e: s.e,
            eps_t: s.eps_t,
            row_max_iter: s.row_max_iter,
            selector,
            column_newton: NewtonOptions {
                tol: s.newton_tol,
                max_iter: s.newton_max_iter,
                linear,
                ..Default::default()
            },
            diagnostics,
            ..Default::default()
        })
    }

    /// Integrator settings with the scheme, step and rank policy optionally overridden.
    pub fn integrate_config(
        &self,
        scheme: Option<SchemeName>,
        dt: Option<f64>,
        rank: Option<usize>,
    ) -> Result<IntegrateConfig, CliError> {
        let name = match scheme {
            Some(s) => s,
            None => self.scheme_name()?,
        };
        let policy = match rank {
            Some(r) => RankPolicy::Fixed(r),
            None => self.policy()?,
        };
        Ok(IntegrateConfig {
            spec: scheme_table(name),
            dt: dt.unwrap_or(self.dt),
            t_final: self.t_final,
            r0: if rank.is_some() { None } else { self.rank.r0 },
            policy,
            warmup: self.solver.warmup,
            opts: self.options()?,
        })
    }
}

pub fn steps_for(t_final: f64, dt: f64) -> usize {
    (t_final / dt).round() as usize
}
