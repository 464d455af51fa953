mod common;

use common::*;
use nalgebra::DMatrix;
use tdbcur::fom::{advance_column, NewtonOptions};
use tdbcur::model::{Burgers1d, BurgersParams, GrayScott2d, GrayScottParams};
use tdbcur::schemes::{assemble_dirk_stage, assemble_euler, assemble_multistep, dirk_update, StageEquation};
use tdbcur::{fom_step, scheme_table, Model, SchemeKind, SchemeName, SchemeSpec};

const LAMBDA: f64 = -1.3;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

fn scalar_step(spec: &SchemeSpec, dt: f64, history: &[f64]) -> f64 {
    let m = Decay::new(vec![LAMBDA], 1);
    let h: Vec<Vec<f64>> = history.iter().map(|&v| vec![v]).collect();
    let hr: Vec<&[f64]> = h.iter().map(|v| v.as_slice()).collect();
    let f: Vec<Vec<f64>> = history.iter().map(|&v| vec![LAMBDA * v]).collect();
    let fr: Vec<&[f64]> = f.iter().map(|v| v.as_slice()).collect();
    advance_column(&m, 0, 0.0, spec, dt, &hr, &fr, &NewtonOptions::default()).unwrap().v[0]
}

#[test]
fn bdf2_coefficients() {
    let s = scheme_table(SchemeName::Bdf2);
    assert_eq!(s.a, vec![1.0 / 3.0, -4.0 / 3.0, 1.0]);
    assert_eq!(s.b, vec![0.0, 0.0, 2.0 / 3.0]);
}

#[test]
fn am2_is_trapezoidal() {
    let s = scheme_table(SchemeName::Am2);
    assert_eq!(s.a, vec![-1.0, 1.0]);
    assert_eq!(s.b, vec![0.5, 0.5]);
}

#[test]
fn dirk2_diagonal() {
    let s = scheme_table(SchemeName::Dirk2);
    let g = 1.0 - 2f64.sqrt() / 2.0;
    assert_eq!(s.steps_or_stages(), 2);
    assert!((s.diag(0) - g).abs() < 1e-16 && (s.diag(1) - g).abs() < 1e-16);
}

#[test]
fn tables_are_consistent() {
    for name in SchemeName::ALL {
        let s = scheme_table(name);
        assert!(s.order_defect() < 1e-12, "{name}");
        match s.kind {
            SchemeKind::Multistep => {
                assert_eq!(*s.a.last().unwrap(), 1.0);
                assert!(s.a.iter().sum::<f64>().abs() < 1e-12);
                let first: f64 =
                    s.a.iter().enumerate().map(|(j, a)| a * j as f64).sum::<f64>() - s.b.iter().sum::<f64>();
                assert!(first.abs() < 1e-12);
            }
            SchemeKind::Dirk => {
                for (i, row) in s.tableau.iter().enumerate() {
                    assert_eq!(row.len(), i + 1);
                    assert!(row[i] > 0.0);
                }
                assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn startup_orders() {
    assert!(scheme_table(SchemeName::Am2).startup().is_none());
    assert_eq!(scheme_table(SchemeName::Bdf2).startup().unwrap().name, Some(SchemeName::Dirk2));
    assert_eq!(scheme_table(SchemeName::Bdf3).startup().unwrap().name, Some(SchemeName::Dirk3));
    assert_eq!(scheme_table(SchemeName::Bdf4).startup().unwrap().name, Some(SchemeName::Dirk4));
    assert!(scheme_table(SchemeName::Dirk3).startup().is_none());
}

#[test]
fn euler_is_bdf1() {
    let m = Burgers1d::new(BurgersParams { n: 64, s: 2, ..Default::default() }, 3).unwrap();
    let v0 = m.initial_condition();
    let prev = v0.column(0).as_slice().to_vec();
    let cur: Vec<f64> = prev.iter().map(|v| v * 1.01 + 0.001).collect();
    let rows: Vec<usize> = (0..64).step_by(5).collect();
    let bdf1 = SchemeSpec::multistep("bdf1", 1, vec![-1.0, 1.0], vec![0.0, 1.0]);
    let a = assemble_euler(&m, 0, 0.1, &cur, &prev, 0.01, &rows).unwrap();
    let b = assemble_multistep(&m, 0, 0.1, &[&prev], &[], &cur, &bdf1, 0.01, &rows).unwrap();
    assert_eq!(a, b);
}

#[test]
fn linear_euler_matrix_is_state_independent() {
    let m = Decay::new(vec![-1.0, -4.0, 2.0], 1);
    let prev = [1.0, 2.0, 3.0];
    let all = [0, 1, 2];
    let a = assemble_euler(&m, 0, 0.0, &[0.3, 0.2, 0.1], &prev, 0.5, &all).unwrap();
    let b = assemble_euler(&m, 0, 0.0, &[7.0, -1.0, 5.0], &prev, 0.5, &all).unwrap();
    assert_eq!(a.a_rows, b.a_rows);
    assert_eq!(a.a_rows[1], vec![(1, 3.0)]);
}

#[test]
fn fixed_point_has_zero_residual() {
    let m = GrayScott2d::new(GrayScottParams { nx: 8, ny: 8, s: 1, ..Default::default() }, 1).unwrap();
    let mut v = vec![0.0; m.n()];
    v[..m.cells()].fill(1.0);
    let rows: Vec<usize> = (0..m.n()).collect();
    let sys = assemble_euler(&m, 0, 0.0, &v, &v, 0.3, &rows).unwrap();
    assert!(sys.b.iter().all(|&b| b == 0.0));
}

#[test]
fn assembled_residual_matches_dense_evaluation() {
    let m = Burgers1d::new(BurgersParams { n: 96, s: 3, ..Default::default() }, 5).unwrap();
    let v0 = m.initial_condition();
    let mut g = rng(11);
    let prev = v0.column(1).as_slice().to_vec();
    let cur: Vec<f64> = prev.iter().zip(gaussian(&mut g, 96, 1).iter()).map(|(v, z)| v + 1e-3 * z).collect();
    let rows: Vec<usize> = (1..95).step_by(7).collect();
    let dt = 0.02;
    let sys = assemble_euler(&m, 1, 0.0, &cur, &prev, dt, &rows).unwrap();
    let mut f = vec![0.0; 96];
    m.rhs_column(&cur, 1, 0.0, &mut f);
    for (k, &i) in rows.iter().enumerate() {
        let r = cur[i] - prev[i] - dt * f[i];
        assert!((sys.b[k] + r).abs() < 1e-15);
    }
}

fn central_jv<M: Model>(m: &M, c: usize, v: &[f64], w: &[f64]) -> Vec<f64> {
    let n = v.len();
    let eps = 1e-6 * v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    let plus: Vec<f64> = v.iter().zip(w).map(|(a, b)| a + eps * b).collect();
    let minus: Vec<f64> = v.iter().zip(w).map(|(a, b)| a - eps * b).collect();
    let (mut fp, mut fm) = (vec![0.0; n], vec![0.0; n]);
    m.rhs_column(&plus, c, 0.0, &mut fp);
    m.rhs_column(&minus, c, 0.0, &mut fm);
    fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * eps)).collect()
}

fn row_times(row: &[(usize, f64)], w: &[f64]) -> f64 {
    row.iter().map(|&(j, a)| a * w[j]).sum()
}

#[test]
fn newton_rows_match_finite_differences() {
    let m = Burgers1d::new(BurgersParams { n: 80, s: 2, ..Default::default() }, 8).unwrap();
    let v0 = m.initial_condition();
    let spec = scheme_table(SchemeName::Bdf2);
    let dt = 0.01;
    let mut g = rng(12);
    let rows: Vec<usize> = (0..80).collect();
    for trial in 0..10 {
        let c = trial % 2;
        let base = v0.column(c).as_slice().to_vec();
        let cur: Vec<f64> = base.iter().zip(gaussian(&mut g, 80, 1).iter()).map(|(v, z)| v + 0.05 * z).collect();
        let w: Vec<f64> = gaussian(&mut g, 80, 1).iter().copied().collect();
        let sys = assemble_multistep(&m, c, 0.0, &[&base, &base], &[], &cur, &spec, dt, &rows).unwrap();
        let jv = central_jv(&m, c, &cur, &w);
        let scale = dt * spec.beta_back(0);
        for i in 0..80 {
            let expect = w[i] - scale * jv[i];
            let got = row_times(&sys.a_rows[i], &w);
            assert!((got - expect).abs() <= 1e-6 * expect.abs().max(1.0), "row {i}: {got} vs {expect}");
            let mut pattern: Vec<usize> = Vec::new();
            m.neighbors(i, &mut pattern);
            pattern.push(i);
            pattern.sort();
            let cols: Vec<usize> = sys.a_rows[i].iter().map(|e| e.0).collect();
            assert_eq!(cols, pattern);
        }
    }
}

#[test]
fn dirk_stage_rows_match_finite_differences() {
    let m = GrayScott2d::new(GrayScottParams { nx: 10, ny: 10, s: 2, ..Default::default() }, 2).unwrap();
    let v0 = m.initial_condition();
    let spec = scheme_table(SchemeName::Dirk3);
    let dt = 2.0;
    let base = v0.column(1).as_slice().to_vec();
    let mut g = rng(13);
    let k1: Vec<f64> = gaussian(&mut g, m.n(), 1).iter().map(|z| 1e-3 * z).collect();
    let k2: Vec<f64> = gaussian(&mut g, m.n(), 1).iter().map(|z| 1e-3 * z).collect();
    let w: Vec<f64> = gaussian(&mut g, m.n(), 1).iter().copied().collect();
    let rows: Vec<usize> = (0..m.n()).collect();
    let sys = assemble_dirk_stage(&m, 1, 0.0, &base, &[&k1], &k2, 1, &spec, dt, &rows).unwrap();
    let eq = StageEquation::dirk_stage(&spec, dt, 1, &base, &[&k1]).unwrap();
    let state = eq.state(&k2);
    let jv = central_jv(&m, 1, &state, &w);
    let mu = dt * spec.diag(1);
    for i in 0..m.n() {
        let expect = w[i] - mu * jv[i];
        let got = row_times(&sys.a_rows[i], &w);
        assert!((got - expect).abs() <= 1e-6 * expect.abs().max(1.0));
    }
}

#[test]
fn trapezoidal_step_closed_form() {
    let m =
        tdbcur::model::AdvectionDiffusion1d::new(tdbcur::model::AdvDiffParams { n: 51, s: 4, ..Default::default() }, 1)
            .unwrap();
    let l = m.operator_matrix();
    let v0 = m.initial_condition();
    let dt = 0.01;
    let (v1, _) = fom_step(&m, &v0, &scheme_table(SchemeName::Am2), dt, 0.0, &NewtonOptions::default()).unwrap();
    let id = DMatrix::<f64>::identity(51, 51);
    let lhs = (&id - &l * (dt / 2.0)) * &v1;
    let rhs = (&id + &l * (dt / 2.0)) * &v0;
    assert!((lhs - &rhs).amax() <= 1e-12 * rhs.amax());
}

#[test]
fn scalar_bdf2_closed_form() {
    let dt = 0.1;
    let (v2, v1) = (1.0, 0.9);
    let got = scalar_step(&scheme_table(SchemeName::Bdf2), dt, &[v1, v2]);
    let expect = ((4.0 / 3.0) * v1 - (1.0 / 3.0) * v2) / (1.0 - (2.0 / 3.0) * dt * LAMBDA);
    assert!(close(got, expect, 1e-14));
}

#[test]
fn scalar_dirk2_stages_closed_form() {
    let spec = scheme_table(SchemeName::Dirk2);
    let g = spec.diag(0);
    let (dt, v) = (0.2, 1.5);
    let m = Decay::new(vec![LAMBDA], 1);
    let step = advance_column(&m, 0, 0.0, &spec, dt, &[&[v]], &[], &NewtonOptions::default()).unwrap();
    let k1 = LAMBDA * v / (1.0 - dt * g * LAMBDA);
    let k2 = LAMBDA * (v + dt * (1.0 - g) * k1) / (1.0 - dt * g * LAMBDA);
    assert!(close(step.stages[0][0], k1, 1e-14));
    assert!(close(step.stages[1][0], k2, 1e-14));
    assert!(close(step.v[0], v + dt * ((1.0 - g) * k1 + g * k2), 1e-14));
}

#[test]
fn one_stage_dirk_is_implicit_euler() {
    let be = SchemeSpec::dirk("be", 1, vec![vec![1.0]], vec![1.0]);
    let m = Burgers1d::new(BurgersParams { n: 64, s: 3, ..Default::default() }, 4).unwrap();
    let v0 = m.initial_condition();
    let opts = NewtonOptions::default();
    let (a, _) = fom_step(&m, &v0, &be, 0.01, 0.0, &opts).unwrap();
    let (b, _) = fom_step(&m, &v0, &scheme_table(SchemeName::Euler), 0.01, 0.0, &opts).unwrap();
    assert!((a - b).amax() < 1e-12);
}

#[test]
fn zero_slopes_leave_state_unchanged() {
    let spec = scheme_table(SchemeName::Dirk4);
    let v = vec![0.5, -1.0, 2.0];
    let z = vec![0.0; 3];
    let ks: Vec<&[f64]> = vec![&z; 5];
    assert_eq!(dirk_update(&spec, 0.3, &v, &ks), v);
}

#[test]
fn observed_orders_on_linear_decay() {
    let lambda = vec![-1.0, -2.0, -0.5];
    let m = Decay::new(lambda.clone(), 2);
    let t_final = 1.0;
    let dts = [0.1, 0.05, 0.025, 0.0125];
    let exact = DMatrix::from_fn(3, 2, |i, c| m.v0[(i, c)] * (lambda[i] * t_final).exp());
    for name in SchemeName::ALL {
        let spec = scheme_table(name);
        let errs: Vec<f64> = dts
            .iter()
            .map(|&dt| (fom_run(&m, &m.v0, spec.clone(), dt, t_final) - &exact).norm() / exact.norm())
            .collect();
        let slope = loglog_slope(&dts, &errs);
        assert!((slope - spec.order as f64).abs() <= 0.2, "{name}: slope {slope} errors {errs:?}");
    }
}

#[test]
fn converged_step_has_vanishing_residual() {
    let m = Burgers1d::new(BurgersParams { n: 128, s: 4, ..Default::default() }, 6).unwrap();
    let v0 = m.initial_condition();
    let dt = 0.01;
    let (v1, _) = fom_step(&m, &v0, &scheme_table(SchemeName::Euler), dt, 0.0, &NewtonOptions::default()).unwrap();
    let rows: Vec<usize> = (0..128).collect();
    for c in 0..4 {
        let sys = assemble_euler(&m, c, dt, v1.column(c).as_slice(), v0.column(c).as_slice(), dt, &rows).unwrap();
        let worst = sys.b.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(worst <= 1e-13, "column {c}: {worst:e}");
    }
}
