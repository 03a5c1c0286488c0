//! High-accuracy reference solver: exact-multiplier augmented Lagrangian
//! (`λ ← λ + ρ(Ax − b)`, no projection) with accelerated inner solves.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::fxp::OverflowAudit;
use crate::inner::{stationarity_residual, Arithmetic, InnerSolver, Precomputed};
use crate::problem::Problem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    pub rho: f64,
    /// Target KKT residual.
    pub tol: f64,
    pub max_outer: u64,
    pub inner_tol: f64,
    pub inner_max: u64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            rho: 10.0,
            tol: 1e-9,
            max_outer: 10_000,
            inner_tol: 1e-12,
            inner_max: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleSolution {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub f: f64,
    /// `max(stationarity of ∇f + Aᵀλ over the box, ‖Ax − b‖)`
    pub kkt: f64,
    pub outer_iters: u64,
    pub inner_iters: u64,
}

impl OracleSolution {
    pub fn x(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x)
    }

    pub fn lambda(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.lambda)
    }
}

/// KKT residual of `(x, λ)` for the original problem.
pub fn kkt_residual(problem: &Problem, x: &DVector<f64>, lambda: &DVector<f64>) -> Result<f64, HarnessError> {
    let mut g = problem.eval_subgradient(x)?;
    g.gemv_tr(1.0, problem.a(), lambda, 1.0);
    let b = problem.bounds();
    let stat = stationarity_residual(x, &g, b.lo(), b.hi());
    Ok(stat.max(problem.residual(x).norm()))
}

pub fn oracle_solve(problem: &Problem, opts: &OracleOptions) -> Result<OracleSolution, HarnessError> {
    let pre = Precomputed::new(problem, opts.rho, Arithmetic::Float, &mut OverflowAudit::default())?;
    let mut solver = InnerSolver::new(&pre, 0.0);
    let mut lambda = DVector::zeros(problem.p());
    let mut inner_iters = 0;
    let mut best: Option<(f64, DVector<f64>, DVector<f64>)> = None;
    for k in 1..=opts.max_outer {
        let (x, _, it) = solver.minimize(&lambda, opts.inner_tol, opts.inner_max);
        inner_iters += it;
        lambda += problem.residual(&x) * opts.rho;
        let kkt = kkt_residual(problem, &x, &lambda)?;
        if best.as_ref().is_none_or(|b| kkt < b.0) {
            best = Some((kkt, x.clone(), lambda.clone()));
        }
        if kkt <= opts.tol {
            return Ok(OracleSolution {
                f: problem.eval_objective(&x)?,
                x: x.as_slice().to_vec(),
                lambda: lambda.as_slice().to_vec(),
                kkt,
                outer_iters: k,
                inner_iters,
            });
        }
    }
    let kkt = best.map(|b| b.0).unwrap_or(f64::INFINITY);
    Err(HarnessError::NonConvergence(format!(
        "KKT residual {kkt:.3e} after {} outer iterations",
        opts.max_outer
    )))
}

/// `Φ_ρ(λ) = min_{x∈X} L_ρ(x; λ)` by a tight inner solve; returns the value,
/// the minimizer and the final stationarity residual.
pub fn dual_value(
    problem: &Problem,
    rho: f64,
    lambda: &DVector<f64>,
    tol: f64,
) -> Result<(f64, DVector<f64>, f64), HarnessError> {
    let pre = Precomputed::new(problem, rho, Arithmetic::Float, &mut OverflowAudit::default())?;
    let mut solver = InnerSolver::new(&pre, 0.0);
    let (x, res, _) = solver.minimize(lambda, tol, 10_000_000);
    Ok((problem.eval_al(&x, lambda, rho)?, x, res))
}
