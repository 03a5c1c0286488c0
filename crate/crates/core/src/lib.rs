//! Inexact augmented Lagrangian solver for `min f(x) s.t. Ax = b, x ∈ box`
//! running under bit-exact simulated fixed-point arithmetic, with a
//! precision designer and a network-utility benchmark harness.

// `!(x > 0.0)` is used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alm;
pub mod designer;
pub mod fxp;
pub mod harness;
pub mod inner;
pub mod linalg;
pub mod par;
pub mod problem;

pub use alm::{run_alm, AlmConfig, Arithmetic, DualBox, SolveReport};
pub use designer::{design, DesignInput, DesignReport};
pub use fxp::{FxError, FxFormat, FxMatrix, FxValue, FxVector, OverflowAudit, OverflowPolicy};
pub use inner::{InnerSolver, Precomputed, SolverError, StopConfig, StopMode};
pub use par::Exec;
pub use problem::{AugmentedLagrangian, BoxSet, EqualityConstraints, Objective, Problem, Term};
