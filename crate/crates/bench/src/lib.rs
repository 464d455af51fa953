//! Kernel benchmarks: row selection, stable CUR, and single steps of the
//! low-rank and full-order integrators on Burgers.

use std::hint::black_box;

use criterion::{BenchmarkId, Criterion};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tdbcur::model::{Burgers1d, BurgersParams};
use tdbcur::{
    deim, fom_step, oversample, qdeim, scheme_table, stable_cur, step, truncated_svd, LowRankState, Model,
    NewtonOptions, RankPolicy, SchemeName, TdbCurOptions, TruncationRule,
};

fn uniform(seed: u64, n: usize, m: usize) -> DMatrix<f64> {
    let mut g = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, m, |_, _| g.random_range(-1.0..1.0))
}

/// Orthonormal `n × k` basis.
pub fn basis(seed: u64, n: usize, k: usize) -> DMatrix<f64> {
    uniform(seed, n, k).qr().q()
}

/// Rank-`r` state of a Burgers run at `t = 0`.
pub fn burgers_state(n: usize, s: usize, r: usize) -> (Burgers1d, LowRankState) {
    let m = Burgers1d::new(BurgersParams { n, s, ..Default::default() }, 1).expect("valid parameters");
    let st = truncated_svd(&m.initial_condition(), &TruncationRule::fixed_rank(r)).expect("nonzero state");
    (m, st)
}

fn selection(c: &mut Criterion) {
    let mut group = c.benchmark_group("selection");
    for k in [8, 32] {
        let b = basis(k as u64, 4096, k);
        group.bench_with_input(BenchmarkId::new("deim", k), &b, |bench, b| bench.iter(|| deim(black_box(b))));
        group.bench_with_input(BenchmarkId::new("qdeim", k), &b, |bench, b| bench.iter(|| qdeim(black_box(b))));
        let p = deim(&b).unwrap();
        group.bench_with_input(BenchmarkId::new("oversample_15", k), &b, |bench, b| {
            bench.iter(|| oversample(black_box(b), &p, 15))
        });
    }
    group.finish();
}

fn cur(c: &mut Criterion) {
    let (n, m, r) = (4096, 512, 10);
    let v = uniform(1, n, r) * uniform(2, m, r).transpose();
    let svd = truncated_svd(&v, &TruncationRule::fixed_rank(r)).unwrap();
    let s = deim(&svd.y).unwrap();
    let p = oversample(&svd.u, &deim(&svd.u).unwrap(), 15).unwrap();
    let cols = DMatrix::from_fn(n, s.len(), |i, j| v[(i, s[j])]);
    let rows = DMatrix::from_fn(p.len(), m, |i, j| v[(p[i], j)]);
    c.bench_function("stable_cur_4096x512_r10", |bench| {
        bench.iter(|| stable_cur(black_box(&cols), black_box(&rows), &p))
    });
}

fn steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("burgers_step");
    group.sample_size(10);
    let dt = 0.01;
    for name in [SchemeName::Am2, SchemeName::Dirk4] {
        let spec = scheme_table(name);
        let (m, st) = burgers_state(512, 64, 5);
        let opts = TdbCurOptions { e: 15, ..Default::default() };
        group.bench_function(BenchmarkId::new("tdbcur", name.as_str()), |bench| {
            bench.iter(|| step(&m, std::slice::from_ref(&st), &spec, dt, 5, &RankPolicy::Fixed(5), &opts).unwrap())
        });
        let v = m.initial_condition();
        group.bench_function(BenchmarkId::new("fom", name.as_str()), |bench| {
            bench.iter(|| fom_step(&m, black_box(&v), &spec, dt, 0.0, &NewtonOptions::default()).unwrap())
        });
    }
    group.finish();
}

pub fn benchmarks(c: &mut Criterion) {
    selection(c);
    cur(c);
    steps(c);
}
