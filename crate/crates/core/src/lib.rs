//! Implicit time integration of matrix differential equations `dV/dt = F(V)` on
//! low-rank manifolds.
//!
//! Each step advances a DEIM-selected set of columns with a full per-column
//! Newton solver, advances a DEIM-selected set of rows with a reduced Newton
//! iteration in a correction basis, and reassembles the rank-`r` factorization
//! with a QR-based CUR. Multistep (AM2, BDF2-4) and DIRK (orders 2-4) schemes,
//! row oversampling, and rank adaptivity are supported.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod factorization;
pub mod fom;
pub mod integrator;
pub mod linalg;
pub mod model;
pub mod sampling;
pub mod schemes;

pub use error::{Error, Result};
pub use factorization::{
    amplification_factor, stable_cur, truncated_svd, Amplification, LowRankState, TruncationMode, TruncationRule,
};
pub use fom::{exact_linear_solution, fom_step, relative_error, rk4_reference, FomIntegrator, NewtonOptions};
pub use integrator::{
    integrate, step, CorrectionBasis, Diagnostics, IntegrateConfig, IntegrateOutput, RankController, RankPolicy,
    StepReport, TdbCurOptions,
};
pub use linalg::LinearSolver;
pub use model::{build_model, Model, ModelParams};
pub use sampling::{deim, find_adjacent, oversample, qdeim, SelectionIndices, Selector};
pub use schemes::{scheme_table, SchemeKind, SchemeName, SchemeSpec};
