mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use tdbcur::{amplification_factor, deim, stable_cur, truncated_svd, Error, TruncationRule};

fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.amax()
}

fn orthonormality(q: &DMatrix<f64>) -> f64 {
    (q.transpose() * q - DMatrix::identity(q.ncols(), q.ncols())).amax()
}

#[test]
fn penrose_keeps_two_of_three() {
    let mut m = DMatrix::zeros(100, 100);
    m[(0, 0)] = 3.0;
    m[(1, 1)] = 2.0;
    m[(2, 2)] = 1e-30;
    let st = truncated_svd(&m, &TruncationRule::penrose()).unwrap();
    assert_eq!(st.rank(), 2);
    assert_eq!(st.sigma.as_slice(), &[3.0, 2.0]);
}

#[test]
fn rank_one_outer_product() {
    let mut g = rng(1);
    let u = orthonormal(&mut g, 9, 1);
    let y = orthonormal(&mut g, 7, 1);
    let m = &u * y.transpose();
    let st = truncated_svd(&m, &TruncationRule::fixed_rank(1)).unwrap();
    assert!((st.sigma[0] - 1.0).abs() < 1e-14);
    let sign = st.u[(0, 0)].signum() * u[(0, 0)].signum();
    assert!((&st.u * sign - &u).amax() < 1e-14);
    assert!((&st.y * sign - &y).amax() < 1e-14);
    assert!(st.u[(0, 0)] > 0.0);
}

#[test]
fn fixed_rank_residual_matches_tail() {
    let mut g = rng(2);
    let m = gaussian(&mut g, 20, 15);
    let sv = m.clone().singular_values();
    let st = truncated_svd(&m, &TruncationRule::fixed_rank(5)).unwrap();
    let tail = sv.iter().skip(5).map(|s| s * s).sum::<f64>().sqrt();
    assert!(((m - st.reconstruct()).norm() - tail).abs() < 1e-12);
}

#[test]
fn threshold_pair_counts_against_frobenius_norm() {
    let mut m = DMatrix::zeros(6, 6);
    for (i, s) in [1.0, 1e-3, 1e-6, 1e-9, 1e-12, 0.0].iter().enumerate() {
        m[(i, i)] = *s;
    }
    let st = truncated_svd(&m, &TruncationRule::threshold_pair(1e-8, 1e-7)).unwrap();
    assert_eq!(st.rank(), 3);
}

#[test]
fn invalid_rules_are_rejected() {
    let m = DMatrix::<f64>::identity(3, 3);
    assert!(matches!(truncated_svd(&m, &TruncationRule::fixed_rank(0)), Err(Error::InvalidInput(_))));
    assert!(matches!(truncated_svd(&m, &TruncationRule::fixed_rank(4)), Err(Error::InvalidInput(_))));
    assert!(matches!(truncated_svd(&m, &TruncationRule::threshold_pair(1e-6, 1e-8)), Err(Error::InvalidInput(_))));
    let bad = TruncationRule { machine_eps: 0.0, ..TruncationRule::penrose() };
    assert!(truncated_svd(&m, &bad).is_err());
}

#[test]
fn sign_convention_is_deterministic() {
    let mut g = rng(3);
    let m = gaussian(&mut g, 12, 10);
    let a = truncated_svd(&m, &TruncationRule::fixed_rank(4)).unwrap();
    let b = truncated_svd(&(-&m), &TruncationRule::fixed_rank(4)).unwrap();
    for j in 0..4 {
        let first = a.u.column(j).iter().copied().find(|v| v.abs() > 1e-12).unwrap();
        assert!(first > 0.0);
    }
    assert!((a.u - b.u).amax() < 1e-12);
    assert!((a.y + b.y).amax() < 1e-12);
}

#[test]
fn cur_reproduces_exact_rank_two() {
    let mut g = rng(4);
    let v = low_rank(&mut g, 5, 6, 2);
    for (p, s) in [([0, 1], [0, 1]), ([2, 4], [1, 5]), ([3, 0], [4, 2])] {
        let st = stable_cur(&cols(&v, &s), &rows(&v, &p), &p).unwrap();
        assert!((st.reconstruct() - &v).norm() <= 1e-12 * v.norm());
    }
}

#[test]
fn cur_of_identity_keeps_selected_block() {
    let v = DMatrix::<f64>::identity(4, 4);
    let st = stable_cur(&cols(&v, &[0, 1]), &rows(&v, &[0, 1]), &[0, 1]).unwrap();
    let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0]));
    assert!((st.reconstruct() - expect).amax() < 1e-15);
}

#[test]
fn cur_rejects_dependent_columns_and_short_rows() {
    let v = DMatrix::from_fn(6, 5, |i, j| (i as f64 + 1.0) * (j as f64 + 1.0));
    let c = cols(&v, &[0, 1]);
    assert!(matches!(stable_cur(&c, &rows(&v, &[0, 1]), &[0, 1]), Err(Error::RankDeficient { .. })));
    let mut g = rng(5);
    let w = gaussian(&mut g, 6, 5);
    assert!(matches!(stable_cur(&cols(&w, &[0, 1, 2]), &rows(&w, &[0, 1]), &[0, 1]), Err(Error::InvalidInput(_))));
}

#[test]
fn cur_error_bound_on_noisy_rank_eight() {
    let mut checked = 0;
    for seed in 0..120 {
        let mut g = rng(1000 + seed);
        let v = low_rank(&mut g, 50, 40, 8) + gaussian(&mut g, 50, 40) * 1e-8;
        let svd = truncated_svd(&v, &TruncationRule::fixed_rank(8)).unwrap();
        let p = deim(&svd.u).unwrap();
        let s = deim(&svd.y).unwrap();
        let amp = amplification_factor(&svd.u, &svd.y, &p, &s).unwrap();
        let sv = v.clone().singular_values();
        let st = stable_cur(&cols(&v, &s), &rows(&v, &p), &p).unwrap();
        let err = spectral_norm(&(&v - st.reconstruct()));
        assert!(err <= amp.c * sv[8] * (1.0 + 1e-8), "seed {seed}: {err:e} > {:e}", amp.c * sv[8]);
        checked += 1;
    }
    assert!(checked >= 100);
}

#[test]
fn amplification_of_identity_rows() {
    let u = DMatrix::<f64>::identity(8, 3);
    let a = amplification_factor(&u, &u, &[0, 1, 2], &[0, 1, 2]).unwrap();
    assert!((a.eta_r - 1.0).abs() < 1e-15);
    assert!((a.eta_c - 1.0).abs() < 1e-15);
}

#[test]
fn eta_matches_dense_pseudoinverse() {
    let mut g = rng(6);
    let u = orthonormal(&mut g, 30, 4);
    let p = deim(&u).unwrap();
    let a = amplification_factor(&u, &u, &p, &p).unwrap();
    assert!((a.eta_r - pinv_norm_oracle(&rows(&u, &p))).abs() < 1e-10);
    assert!((a.c - a.eta_r * (1.0 + a.eta_r)).abs() < 1e-10);
}

#[test]
fn eta_respects_deim_growth_bound() {
    for seed in 0..50 {
        let mut g = rng(2000 + seed);
        let (n, r) = (40, 5);
        let u = orthonormal(&mut g, n, r);
        let p = deim(&u).unwrap();
        let a = amplification_factor(&u, &u, &p, &p).unwrap();
        let bound = (1.0 + (2.0 * n as f64).sqrt()).powi(r as i32 - 1) / u.column(0).amax();
        assert!(a.eta_r <= bound);
    }
}

#[test]
fn amplification_rejects_singular_selection() {
    let mut u = DMatrix::zeros(5, 2);
    u[(0, 0)] = 1.0;
    u[(1, 1)] = 1.0;
    assert!(matches!(amplification_factor(&u, &u, &[0, 2], &[0, 1]), Err(Error::Conditioning { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eckart_young(seed in any::<u64>(), n in 2usize..25, m in 2usize..25, kf in 0.0f64..1.0) {
        let mut g = rng(seed);
        let a = gaussian(&mut g, n, m);
        let k = 1 + ((n.min(m) - 1) as f64 * kf) as usize;
        let st = truncated_svd(&a, &TruncationRule::fixed_rank(k)).unwrap();
        let sv = a.clone().singular_values();
        let tail: f64 = sv.iter().skip(k).map(|s| s * s).sum();
        let got = (&a - st.reconstruct()).norm_squared();
        prop_assert!((got - tail).abs() <= 1e-10 * a.norm_squared().max(tail));
        prop_assert!(orthonormality(&st.u) < 1e-12);
        prop_assert!(orthonormality(&st.y) < 1e-12);
        prop_assert!(st.sigma.iter().all(|&s| s >= 0.0));
        prop_assert!(st.sigma.as_slice().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn cur_exact_for_low_rank(seed in any::<u64>(), r in 1usize..6, extra in 0usize..6) {
        let mut g = rng(seed);
        let (n, m) = (30, 25);
        let v = low_rank(&mut g, n, m, r);
        let svd = truncated_svd(&v, &TruncationRule::fixed_rank(r)).unwrap();
        let s = deim(&svd.y).unwrap();
        let p0 = deim(&svd.u).unwrap();
        let p = tdbcur::oversample(&svd.u, &p0, extra).unwrap();
        let st = stable_cur(&cols(&v, &s), &rows(&v, &p), &p).unwrap();
        let vh = st.reconstruct();
        prop_assert!((&vh - &v).norm() <= 1e-12 * v.norm());
        prop_assert!(orthonormality(&st.u) < 1e-12);
        prop_assert!(orthonormality(&st.y) < 1e-12);
    }

    #[test]
    fn interpolation_identities(seed in any::<u64>(), r in 1usize..6, extra in 0usize..5) {
        let mut g = rng(seed);
        let v = gaussian(&mut g, 30, 20);
        let svd = truncated_svd(&v, &TruncationRule::fixed_rank(r)).unwrap();
        let s = deim(&svd.y).unwrap();
        let p0 = deim(&svd.u).unwrap();
        let p = tdbcur::oversample(&svd.u, &p0, extra).unwrap();
        let st = stable_cur(&cols(&v, &s), &rows(&v, &p), &p).unwrap();
        let vh = st.reconstruct();
        let tol = 1e-12 * max_abs(&v);
        prop_assert!((cols(&vh, &s) - cols(&v, &s)).amax() <= tol);
        if extra == 0 {
            prop_assert!((rows(&vh, &p) - rows(&v, &p)).amax() <= tol);
        }
    }
}
