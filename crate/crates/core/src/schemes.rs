//! Implicit time schemes and the per-column linearized Newton systems.
//!
//! Every implicit equation handled here has the form
//! `R(u) = u + g − γ F(w0 + μ u) = 0`, with Jacobian `I − γ μ J(w)`.
//! Multistep schemes solve for the new state (`w0 = 0`, `μ = 1`); DIRK
//! stages solve for the stage slope `K` (`g = 0`, `γ = 1`).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::Csr;
use crate::model::{Model, StateView};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeName {
    Euler,
    Am2,
    Bdf2,
    Bdf3,
    Bdf4,
    Dirk2,
    Dirk3,
    Dirk4,
}

impl SchemeName {
    pub const ALL: [SchemeName; 8] = [
        SchemeName::Euler,
        SchemeName::Am2,
        SchemeName::Bdf2,
        SchemeName::Bdf3,
        SchemeName::Bdf4,
        SchemeName::Dirk2,
        SchemeName::Dirk3,
        SchemeName::Dirk4,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeName::Euler => "euler",
            SchemeName::Am2 => "am2",
            SchemeName::Bdf2 => "bdf2",
            SchemeName::Bdf3 => "bdf3",
            SchemeName::Bdf4 => "bdf4",
            SchemeName::Dirk2 => "dirk2",
            SchemeName::Dirk3 => "dirk3",
            SchemeName::Dirk4 => "dirk4",
        }
    }
}

impl fmt::Display for SchemeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeName::ALL
            .into_iter()
            .find(|n| n.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown scheme '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    Multistep,
    Dirk,
}

/// Coefficients of one implicit scheme.
///
/// Multistep coefficients are stored oldest-to-newest, `a[l] = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeSpec {
    pub name: Option<SchemeName>,
    pub id: &'static str,
    pub kind: SchemeKind,
    pub order: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub tableau: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub nodes: Vec<f64>,
}

impl SchemeSpec {
    pub fn multistep(id: &'static str, order: usize, a: Vec<f64>, b: Vec<f64>) -> Self {
        SchemeSpec {
            name: None,
            id,
            kind: SchemeKind::Multistep,
            order,
            a,
            b,
            tableau: Vec::new(),
            weights: Vec::new(),
            nodes: Vec::new(),
        }
    }

    pub fn dirk(id: &'static str, order: usize, tableau: Vec<Vec<f64>>, weights: Vec<f64>) -> Self {
        let nodes = tableau.iter().map(|row| row.iter().sum()).collect();
        SchemeSpec {
            name: None,
            id,
            kind: SchemeKind::Dirk,
            order,
            a: Vec::new(),
            b: Vec::new(),
            tableau,
            weights,
            nodes,
        }
    }

    /// Number of steps `l` (multistep) or stages `L` (DIRK).
    pub fn steps_or_stages(&self) -> usize {
        match self.kind {
            SchemeKind::Multistep => self.a.len() - 1,
            SchemeKind::Dirk => self.weights.len(),
        }
    }

    /// Multistep coefficient on `V^{k−j}` (`j = 0` is the new level).
    pub fn alpha_back(&self, j: usize) -> f64 {
        self.a[self.a.len() - 1 - j]
    }

    /// Multistep coefficient on `F(V^{k−j})`.
    pub fn beta_back(&self, j: usize) -> f64 {
        self.b[self.b.len() - 1 - j]
    }

    /// Diagonal entry `a_ll` of the DIRK tableau.
    pub fn diag(&self, stage: usize) -> f64 {
        self.tableau[stage][stage]
    }

    /// Bootstrap scheme for the first `l − 1` steps of a multistep method.
    pub fn startup(&self) -> Option<SchemeSpec> {
        if self.kind != SchemeKind::Multistep || self.steps_or_stages() <= 1 {
            return None;
        }
        let name = match self.order {
            0..=2 => SchemeName::Dirk2,
            3 => SchemeName::Dirk3,
            _ => SchemeName::Dirk4,
        };
        Some(scheme_table(name))
    }

    /// Largest violation of the order conditions up to `self.order`.
    pub fn order_defect(&self) -> f64 {
        match self.kind {
            SchemeKind::Multistep => {
                let l = self.a.len();
                let mut worst: f64 = (self.a[l - 1] - 1.0).abs();
                for q in 0..=self.order as i32 {
                    let lhs: f64 = (0..l).map(|j| self.a[j] * (j as f64).powi(q)).sum();
                    let rhs: f64 =
                        if q == 0 { 0.0 } else { (0..l).map(|j| q as f64 * self.b[j] * (j as f64).powi(q - 1)).sum() };
                    worst = worst.max((lhs - rhs).abs());
                }
                worst
            }
            SchemeKind::Dirk => {
                let a = &self.tableau;
                let b = &self.weights;
                let c = &self.nodes;
                let l = b.len();
                let mut worst: f64 = 0.0;
                for i in 0..l {
                    let rs: f64 = a[i].iter().sum();
                    worst = worst.max((rs - c[i]).abs());
                    if a[i].len() != i + 1 {
                        return f64::INFINITY;
                    }
                }
                let ac: Vec<f64> = (0..l).map(|i| (0..=i).map(|j| a[i][j] * c[j]).sum()).collect();
                let ac2: Vec<f64> = (0..l).map(|i| (0..=i).map(|j| a[i][j] * c[j] * c[j]).sum()).collect();
                let aac: Vec<f64> = (0..l).map(|i| (0..=i).map(|j| a[i][j] * ac[j]).sum()).collect();
                let sum = |f: &dyn Fn(usize) -> f64| (0..l).map(f).sum::<f64>();
                let mut conds = vec![(sum(&|i| b[i]), 1.0)];
                if self.order >= 2 {
                    conds.push((sum(&|i| b[i] * c[i]), 0.5));
                }
                if self.order >= 3 {
                    conds.push((sum(&|i| b[i] * c[i] * c[i]), 1.0 / 3.0));
                    conds.push((sum(&|i| b[i] * ac[i]), 1.0 / 6.0));
                }
                if self.order >= 4 {
                    conds.push((sum(&|i| b[i] * c[i].powi(3)), 0.25));
                    conds.push((sum(&|i| b[i] * c[i] * ac[i]), 0.125));
                    conds.push((sum(&|i| b[i] * ac2[i]), 1.0 / 12.0));
                    conds.push((sum(&|i| b[i] * aac[i]), 1.0 / 24.0));
                }
                conds.iter().fold(worst, |w, (got, want)| w.max((got - want).abs()))
            }
        }
    }
}

/// Standard coefficient table for a named scheme.
pub fn scheme_table(name: SchemeName) -> SchemeSpec {
    let mut spec = match name {
        SchemeName::Euler => SchemeSpec::multistep("euler", 1, vec![-1.0, 1.0], vec![0.0, 1.0]),
        SchemeName::Am2 => SchemeSpec::multistep("am2-trapezoidal", 2, vec![-1.0, 1.0], vec![0.5, 0.5]),
        SchemeName::Bdf2 => {
            SchemeSpec::multistep("bdf2", 2, vec![1.0 / 3.0, -4.0 / 3.0, 1.0], vec![0.0, 0.0, 2.0 / 3.0])
        }
        SchemeName::Bdf3 => SchemeSpec::multistep(
            "bdf3",
            3,
            vec![-2.0 / 11.0, 9.0 / 11.0, -18.0 / 11.0, 1.0],
            vec![0.0, 0.0, 0.0, 6.0 / 11.0],
        ),
        SchemeName::Bdf4 => SchemeSpec::multistep(
            "bdf4",
            4,
            vec![3.0 / 25.0, -16.0 / 25.0, 36.0 / 25.0, -48.0 / 25.0, 1.0],
            vec![0.0, 0.0, 0.0, 0.0, 12.0 / 25.0],
        ),
        SchemeName::Dirk2 => {
            let g = 1.0 - std::f64::consts::SQRT_2 / 2.0;
            SchemeSpec::dirk("sdirk2-2stage-gamma-1-sqrt2/2", 2, vec![vec![g], vec![1.0 - g, g]], vec![1.0 - g, g])
        }
        SchemeName::Dirk3 => {
            let g = 0.435_866_521_508_459;
            let b1 = -(6.0 * g * g - 16.0 * g + 1.0) / 4.0;
            let b2 = (6.0 * g * g - 20.0 * g + 5.0) / 4.0;
            SchemeSpec::dirk(
                "alexander-sdirk3-3stage",
                3,
                vec![vec![g], vec![(1.0 - g) / 2.0, g], vec![b1, b2, g]],
                vec![b1, b2, g],
            )
        }
        SchemeName::Dirk4 => {
            let last = vec![25.0 / 24.0, -49.0 / 48.0, 125.0 / 16.0, -85.0 / 12.0, 0.25];
            SchemeSpec::dirk(
                "hairer-wanner-sdirk4-5stage-gamma-1/4",
                4,
                vec![
                    vec![0.25],
                    vec![0.5, 0.25],
                    vec![17.0 / 50.0, -1.0 / 25.0, 0.25],
                    vec![371.0 / 1360.0, -137.0 / 2720.0, 15.0 / 544.0, 0.25],
                    last.clone(),
                ],
                last,
            )
        }
    };
    spec.name = Some(name);
    spec
}

/// One implicit equation `u + g − γ F(w0 + μ u) = 0`.
///
/// Vectors may cover a full column or any aligned subset of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct StageEquation {
    pub g: Vec<f64>,
    pub gamma: f64,
    pub w0: Option<Vec<f64>>,
    pub mu: f64,
}

impl StageEquation {
    /// Multistep equation for the new level from `history[j−1] = V^{k−j}`
    /// and `f_history[j−1] = F(V^{k−j})`. Entries of `f_history` may be empty
    /// where the matching coefficient vanishes.
    pub fn multistep(spec: &SchemeSpec, dt: f64, history: &[&[f64]], f_history: &[&[f64]]) -> Result<Self> {
        if spec.kind != SchemeKind::Multistep {
            return Err(Error::InvalidInput("multistep equation needs a multistep scheme".into()));
        }
        let l = spec.steps_or_stages();
        if history.len() < l {
            return Err(Error::Startup { needed: l, available: history.len() });
        }
        let len = history[0].len();
        let mut g = vec![0.0; len];
        for j in 1..=l {
            let a = spec.alpha_back(j);
            let hv = history[j - 1];
            g.iter_mut().zip(hv).for_each(|(gi, v)| *gi += a * v);
            let b = spec.beta_back(j);
            if b != 0.0 {
                let fv = f_history.get(j - 1).copied().unwrap_or(&[]);
                if fv.len() != len {
                    return Err(Error::Startup { needed: l, available: j - 1 });
                }
                g.iter_mut().zip(fv).for_each(|(gi, f)| *gi -= dt * b * f);
            }
        }
        Ok(StageEquation { g, gamma: dt * spec.beta_back(0), w0: None, mu: 1.0 })
    }

    /// DIRK stage `stage` (0-based) for the slope `K^stage`.
    pub fn dirk_stage(spec: &SchemeSpec, dt: f64, stage: usize, v_base: &[f64], k_stages: &[&[f64]]) -> Result<Self> {
        if spec.kind != SchemeKind::Dirk {
            return Err(Error::InvalidInput("stage equation needs a DIRK scheme".into()));
        }
        if stage >= spec.steps_or_stages() || k_stages.len() < stage {
            return Err(Error::InvalidInput(format!("stage {stage} lacks previous slopes")));
        }
        let mut w0 = v_base.to_vec();
        for (m, km) in k_stages.iter().take(stage).enumerate() {
            let a = dt * spec.tableau[stage][m];
            w0.iter_mut().zip(km.iter()).for_each(|(w, k)| *w += a * k);
        }
        Ok(StageEquation { g: vec![0.0; v_base.len()], gamma: 1.0, w0: Some(w0), mu: dt * spec.diag(stage) })
    }

    /// Evaluation state `w = w0 + μ u`.
    pub fn state_into(&self, u: &[f64], w: &mut [f64]) {
        match &self.w0 {
            None => w.copy_from_slice(u),
            Some(w0) => {
                for ((wi, bi), ui) in w.iter_mut().zip(w0).zip(u) {
                    *wi = bi + self.mu * ui;
                }
            }
        }
    }

    pub fn state(&self, u: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; u.len()];
        self.state_into(u, &mut w);
        w
    }

    /// Scale on `J` in the Newton matrix `I − γ μ J`.
    pub fn jacobian_scale(&self) -> f64 {
        self.gamma * self.mu
    }

    /// Residual entry for local index `i` given `F(w)` at that row.
    pub fn residual(&self, i: usize, u_i: f64, f_i: f64) -> f64 {
        u_i + self.g[i] - self.gamma * f_i
    }
}

/// Rows of the Newton matrix and right-hand side at requested rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedSystem {
    pub rows: Vec<usize>,
    pub a_rows: Vec<Vec<(usize, f64)>>,
    pub b: Vec<f64>,
}

/// Assembles rows of `A = I − γμ J(w)` and `b = −R(u)` for a full column `u`.
pub fn assemble_rows<M: Model + ?Sized>(
    model: &M,
    c: usize,
    t: f64,
    eq: &StageEquation,
    u: &[f64],
    rows: &[usize],
) -> Result<LinearizedSystem> {
    let n = model.n();
    if u.len() != n || eq.g.len() != n {
        return Err(Error::InvalidInput("assembly expects full-length columns".into()));
    }
    if rows.iter().any(|&r| r >= n) {
        return Err(Error::InvalidInput("row index out of range".into()));
    }
    let w = eq.state(u);
    let scale = eq.jacobian_scale();
    let view: &[f64] = &w;
    let mut a_rows = Vec::with_capacity(rows.len());
    let mut b = Vec::with_capacity(rows.len());
    let mut jac = Vec::new();
    for &row in rows {
        let f = model.rhs_row(row, &view as &dyn StateView, c, t);
        b.push(-eq.residual(row, u[row], f));
        model.jacobian_row(row, &view as &dyn StateView, c, t, &mut jac);
        a_rows.push(identity_minus(row, scale, &jac));
    }
    Ok(LinearizedSystem { rows: rows.to_vec(), a_rows, b })
}

fn identity_minus(row: usize, scale: f64, jac: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = jac.iter().map(|&(j, v)| (j, -scale * v)).collect();
    match out.iter_mut().find(|(j, _)| *j == row) {
        Some(e) => e.1 += 1.0,
        None => {
            let pos = out.partition_point(|(j, _)| *j < row);
            out.insert(pos, (row, 1.0));
        }
    }
    out
}

/// Full-column Newton matrix in CSR form and right-hand side `b = −R(u)`.
pub fn assemble_column<M: Model + ?Sized>(
    model: &M,
    c: usize,
    t: f64,
    eq: &StageEquation,
    u: &[f64],
) -> (Csr, Vec<f64>) {
    let n = model.n();
    let w = eq.state(u);
    let mut f = vec![0.0; n];
    model.rhs_column(&w, c, t, &mut f);
    let b: Vec<f64> = (0..n).map(|i| -eq.residual(i, u[i], f[i])).collect();
    let mut a = model.jacobian_csr(&w, c, t);
    let scale = eq.jacobian_scale();
    for i in 0..n {
        let mut has_diag = false;
        for k in a.row_ptr[i]..a.row_ptr[i + 1] {
            a.vals[k] *= -scale;
            if a.col_idx[k] == i {
                a.vals[k] += 1.0;
                has_diag = true;
            }
        }
        debug_assert!(has_diag, "jacobian pattern must include the diagonal");
    }
    (a, b)
}

/// Implicit Euler rows: `A = I − dt J(v)`, `b = v_prev − v + dt F(v)`.
pub fn assemble_euler<M: Model + ?Sized>(
    model: &M,
    c: usize,
    t: f64,
    v_col: &[f64],
    v_prev: &[f64],
    dt: f64,
    rows: &[usize],
) -> Result<LinearizedSystem> {
    let spec = scheme_table(SchemeName::Euler);
    let eq = StageEquation::multistep(&spec, dt, &[v_prev], &[])?;
    assemble_rows(model, c, t, &eq, v_col, rows)
}

/// Multistep rows at the current iterate `v_col`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_multistep<M: Model + ?Sized>(
    model: &M,
    c: usize,
    t: f64,
    history: &[&[f64]],
    f_history: &[&[f64]],
    v_col: &[f64],
    spec: &SchemeSpec,
    dt: f64,
    rows: &[usize],
) -> Result<LinearizedSystem> {
    let eq = StageEquation::multistep(spec, dt, history, f_history)?;
    assemble_rows(model, c, t, &eq, v_col, rows)
}

/// DIRK stage rows with the slope iterate `k_iter`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_dirk_stage<M: Model + ?Sized>(
    model: &M,
    c: usize,
    t: f64,
    v_base: &[f64],
    k_stages: &[&[f64]],
    k_iter: &[f64],
    stage: usize,
    spec: &SchemeSpec,
    dt: f64,
    rows: &[usize],
) -> Result<LinearizedSystem> {
    let eq = StageEquation::dirk_stage(spec, dt, stage, v_base, k_stages)?;
    let tc = t + spec.nodes[stage] * dt;
    assemble_rows(model, c, tc, &eq, k_iter, rows)
}

/// `v^{k−1} + dt Σ b_l K^l`.
pub fn dirk_update(spec: &SchemeSpec, dt: f64, v_prev: &[f64], k_stages: &[&[f64]]) -> Vec<f64> {
    let mut v = v_prev.to_vec();
    for (bl, kl) in spec.weights.iter().zip(k_stages) {
        v.iter_mut().zip(kl.iter()).for_each(|(vi, ki)| *vi += dt * bl * ki);
    }
    v
}
