//! Outer loop: inexact projected dual ascent on the augmented Lagrangian,
//! plus the error-bound calculators used to certify its output.
//!
//! One run performs `K + 1` primal solves at `λ_0 … λ_K` and `K + 1` dual
//! updates, then reports `x̄_K = (1/K) Σ_{k=1..K} x̃_k` and
//! `λ̄_K = (1/K) Σ_{k=1..K} λ_k`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::fxp::{fx_matvec, fx_project_box, FxError, FxVector, OverflowAudit};
pub use crate::inner::Arithmetic;
use crate::inner::{InnerSolver, Precomputed, SolverError, StopConfig, StopReason};
use crate::problem::Problem;

/// Symmetric dual box `D = [−r, r]^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualBox {
    radius: f64,
    p: usize,
}

impl DualBox {
    pub fn new(radius: f64, p: usize) -> Result<Self, SolverError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(SolverError::Config(format!("dual box radius {radius} must be > 0")));
        }
        Ok(Self { radius, p })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn contains(&self, lambda: &DVector<f64>) -> bool {
        lambda.iter().all(|v| v.abs() <= self.radius)
    }

    pub fn project(&self, lambda: &DVector<f64>) -> DVector<f64> {
        lambda.map(|v| v.clamp(-self.radius, self.radius))
    }

    /// Euclidean diameter `2√p·r`.
    pub fn diameter(&self) -> f64 {
        2.0 * (self.p as f64).sqrt() * self.radius
    }

    /// Diameter of the set enlarged by the dual-update error allowance.
    pub fn b_lambda(&self, b_out: f64) -> f64 {
        2.0 * (self.p as f64).sqrt() * (self.radius + b_out)
    }

    /// Whether `0`, `2λ*` and `λ* + 1` all lie in the box.
    pub fn admits(&self, lambda_star: &DVector<f64>) -> bool {
        self.contains(&(lambda_star * 2.0)) && self.contains(&lambda_star.add_scalar(1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlmConfig {
    pub rho: f64,
    pub b_in: f64,
    pub b_out: f64,
    pub k_out: u64,
    pub dual_box: DualBox,
    pub arithmetic: Arithmetic,
    /// Diameter bound of the enlarged dual set; defaults to `dual_box.b_lambda(b_out)`.
    pub b_lambda: f64,
    /// Measure realized `ε_gp`, `ε_out` against real arithmetic.
    pub measure_errors: bool,
    /// Keep every `x̃_k` in the report.
    pub record_iterates: bool,
}

impl AlmConfig {
    pub fn new(rho: f64, dual_box: DualBox, k_out: u64, arithmetic: Arithmetic) -> Self {
        Self {
            rho,
            b_in: 0.0,
            b_out: 0.0,
            k_out,
            dual_box,
            arithmetic,
            b_lambda: dual_box.b_lambda(0.0),
            measure_errors: false,
            record_iterates: false,
        }
    }

    pub fn with_budgets(mut self, b_in: f64, b_out: f64) -> Self {
        self.b_in = b_in;
        self.b_out = b_out;
        self.b_lambda = self.dual_box.b_lambda(b_out);
        self
    }

    /// `L = 2/ρ`.
    pub fn dual_constant(&self) -> f64 {
        2.0 / self.rho
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(SolverError::Config(format!("rho must be > 0, got {}", self.rho)));
        }
        if self.k_out == 0 {
            return Err(SolverError::Config("K_out must be >= 1".into()));
        }
        if self.b_in < 0.0 || self.b_out < 0.0 {
            return Err(SolverError::Config("budgets must be >= 0".into()));
        }
        if let Some(fmt) = self.arithmetic.format() {
            if !fmt.in_range(self.dual_box.radius) {
                return Err(SolverError::Fx(FxError::Overflow {
                    value: self.dual_box.radius,
                    tag: format!("{} (dual box radius)", fmt.tag()),
                }));
            }
            if !fmt.is_exact(self.dual_box.radius) {
                return Err(SolverError::Config(format!(
                    "dual box radius {} is not exact in {}",
                    self.dual_box.radius,
                    fmt.tag()
                )));
            }
        }
        Ok(())
    }
}

/// `δ = 2B_in + 2B_out·B_λ`.
pub fn compute_delta(b_in: f64, b_out: f64, b_lambda: f64) -> f64 {
    2.0 * b_in + 2.0 * b_out * b_lambda
}

/// `E = (1 + 4/L)B_λB_out + (1 + 4/L)B_in + (½ + 1/(2L))B_out²`.
pub fn compute_e(l: f64, b_lambda: f64, b_in: f64, b_out: f64) -> f64 {
    (1.0 + 4.0 / l) * b_lambda * b_out + (1.0 + 4.0 / l) * b_in + (0.5 + 0.5 / l) * b_out * b_out
}

/// Inexact oracle pair `(L_ρ(x̃; λ) + B_out B_λ, Ax̃ − b + ε_out)`.
pub fn oracle_pair(
    problem: &Problem,
    rho: f64,
    lambda: &DVector<f64>,
    x_tilde: &DVector<f64>,
    eps_out: &DVector<f64>,
    b_out: f64,
    b_lambda: f64,
) -> Result<(f64, DVector<f64>), SolverError> {
    let value = problem.eval_al(x_tilde, lambda, rho)? + b_out * b_lambda;
    Ok((value, problem.residual(x_tilde) + eps_out))
}

/// `φᵏ(λ) = (L/2)‖λ_k − λ‖² + ½‖λ_{k−1} − λ*‖²`.
pub fn merit_phi(
    l: f64,
    lambda_k: &DVector<f64>,
    lambda_prev: &DVector<f64>,
    lambda_star: &DVector<f64>,
    lambda: &DVector<f64>,
) -> f64 {
    0.5 * l * (lambda_k - lambda).norm_squared() + 0.5 * (lambda_prev - lambda_star).norm_squared()
}

/// Dual suboptimality bound `(L/(2K))‖λ₀ − λ*‖² + δ` for the averaged multiplier.
pub fn dual_gap_bound(
    l: f64,
    lambda0: &DVector<f64>,
    lambda_star: &DVector<f64>,
    k: u64,
    delta: f64,
) -> f64 {
    l / (2.0 * k as f64) * (lambda0 - lambda_star).norm_squared() + delta
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimalBounds {
    pub opt_lo: f64,
    pub opt_hi: f64,
    pub feas: f64,
    /// `‖r(x̄)‖ = 0`: the feasibility bound holds trivially.
    pub feas_trivial: bool,
}

/// Primal suboptimality and infeasibility bounds for `x̄_K`.
pub fn primal_bounds(
    l: f64,
    lambda1: &DVector<f64>,
    lambda0: &DVector<f64>,
    lambda_star: &DVector<f64>,
    residual_bar: &DVector<f64>,
    k: u64,
    e: f64,
) -> PrimalBounds {
    let kf = k as f64;
    let phi = |lam: &DVector<f64>| merit_phi(l, lambda1, lambda0, lambda_star, lam);
    let zero = DVector::zeros(lambda_star.len());
    let opt_hi = phi(&zero) / kf + e;
    let opt_lo = -(phi(&(lambda_star * 2.0)) / kf + e);
    let rn = residual_bar.norm();
    if rn == 0.0 {
        return PrimalBounds {
            opt_lo,
            opt_hi,
            feas: e,
            feas_trivial: true,
        };
    }
    let feas = phi(&(lambda_star + residual_bar / rn)) / kf + e;
    PrimalBounds {
        opt_lo,
        opt_hi,
        feas,
        feas_trivial: false,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InnerStats {
    pub calls: u64,
    pub total_iters: u64,
    pub max_iters: u64,
    pub criterion: u64,
    pub capped: u64,
    pub exhausted: u64,
    /// Largest certified subproblem gap over the calls.
    pub max_gap_bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub arithmetic: Arithmetic,
    pub rho: f64,
    pub l: f64,
    pub k_out: u64,
    pub b_in: f64,
    pub b_out: f64,
    pub b_lambda: f64,
    pub delta: f64,
    pub e_bound: f64,
    pub dual_radius: f64,
    pub x_bar: Vec<f64>,
    pub lambda_bar: Vec<f64>,
    pub x_last: Vec<f64>,
    pub lambda_last: Vec<f64>,
    pub objective_bar: f64,
    pub residual_bar: f64,
    pub objective_last: f64,
    pub residual_last: f64,
    pub inner: InnerStats,
    pub eps_out_max: f64,
    pub eps_out_bound: f64,
    pub eps_gp_max: f64,
    pub eps_gp_bound: f64,
    pub audit: OverflowAudit,
    pub dual_contained: bool,
    /// `λ_0 … λ_{K+1}`.
    #[serde(skip)]
    pub lambda_history: Vec<DVector<f64>>,
    /// `x̃_0 … x̃_K` when requested.
    #[serde(skip)]
    pub x_history: Vec<DVector<f64>>,
}

impl SolveReport {
    pub fn x_bar(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x_bar)
    }

    pub fn lambda_bar(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.lambda_bar)
    }

    pub fn lambda(&self, k: usize) -> &DVector<f64> {
        &self.lambda_history[k]
    }
}

/// Run the inexact method with the primal stopping rule `stop`.
pub fn run_alm(
    problem: &Problem,
    cfg: &AlmConfig,
    stop: &StopConfig,
) -> Result<SolveReport, SolverError> {
    cfg.validate()?;
    stop.validate()?;
    let p = problem.p();
    if cfg.dual_box.dim() != p {
        return Err(SolverError::Config(format!(
            "dual box has dimension {}, problem has {p} constraints",
            cfg.dual_box.dim()
        )));
    }
    let mut audit = OverflowAudit::default();
    let pre = Precomputed::new(problem, cfg.rho, cfg.arithmetic, &mut audit)?;
    let r = cfg.dual_box.radius();
    let mut solver = InnerSolver::new(&pre, r).measure_errors(cfg.measure_errors);
    let l = cfg.dual_constant();
    let n = problem.n();
    let k_out = cfg.k_out;

    let mut lambda = DVector::zeros(p);
    let mut lambda_fx = None;
    let mut dual_bounds = None;
    if let Arithmetic::Fixed { fmt, policy } = cfg.arithmetic {
        lambda_fx = Some(FxVector::zeros(p, fmt));
        let lo = FxVector::quantize(&vec![-r; p], fmt, policy, &mut audit)?;
        let hi = FxVector::quantize(&vec![r; p], fmt, policy, &mut audit)?;
        dual_bounds = Some((lo, hi));
    }

    let mut history = vec![lambda.clone()];
    let mut x_history = Vec::new();
    let mut x_sum = DVector::zeros(n);
    let mut lambda_sum = DVector::zeros(p);
    let mut stats = InnerStats::default();
    let mut eps_out_max = 0.0f64;
    let mut eps_gp_max = 0.0f64;
    let mut contained = true;
    let mut x_last = DVector::zeros(n);

    for k in 0..=k_out {
        let res = match (&lambda_fx, cfg.arithmetic) {
            (Some(lfx), Arithmetic::Fixed { .. }) => solver.solve_fixed(lfx, stop, &mut audit)?,
            _ => solver.solve_float(&lambda, stop)?,
        };
        stats.calls += 1;
        stats.total_iters += res.iters;
        stats.max_iters = stats.max_iters.max(res.iters);
        match res.stop {
            StopReason::Criterion => stats.criterion += 1,
            StopReason::Cap => stats.capped += 1,
            StopReason::Exhausted => stats.exhausted += 1,
        }
        stats.max_gap_bound = stats.max_gap_bound.max(res.gap_bound);
        eps_gp_max = eps_gp_max.max(res.max_eps_gp);
        if k >= 1 {
            x_sum += &res.x;
            lambda_sum += &lambda;
        }
        if cfg.record_iterates {
            x_history.push(res.x.clone());
        }

        // λ_{k+1} = Π_D[λ_k + (1/L)(Ax̃_k − b + ε_out)]
        let exact = &lambda + (problem.residual(&res.x)) / l;
        match (cfg.arithmetic, lambda_fx.as_mut(), res.x_fx.as_ref()) {
            (Arithmetic::Fixed { fmt, policy }, Some(lfx), Some(xfx)) => {
                let fx = pre.fixed().expect("fixed data present in fixed mode");
                let t = fx_matvec(&fx.m3, xfx, fmt, policy, &mut audit)?;
                let pre_proj = lfx
                    .add(&t, policy, &mut audit)?
                    .sub(&fx.v2, policy, &mut audit)?;
                if cfg.measure_errors {
                    let realized = DVector::from_vec(pre_proj.to_real());
                    eps_out_max = eps_out_max.max(l * (realized - &exact).norm());
                }
                let (lo, hi) = dual_bounds.as_ref().expect("dual bounds in fixed mode");
                *lfx = fx_project_box(&pre_proj, lo, hi)?;
                lambda = DVector::from_vec(lfx.to_real());
            }
            _ => lambda = cfg.dual_box.project(&exact),
        }
        contained &= cfg.dual_box.contains(&lambda);
        history.push(lambda.clone());
        x_last = res.x;
    }

    let kf = k_out as f64;
    let x_bar = x_sum / kf;
    let lambda_bar = lambda_sum / kf;
    let b_lambda = cfg.b_lambda;
    log::debug!(
        "alm: K={k_out}, inner calls={} (criterion {}, cap {}), saturations={}",
        stats.calls,
        stats.criterion,
        stats.capped,
        audit.saturations
    );
    Ok(SolveReport {
        arithmetic: cfg.arithmetic,
        rho: cfg.rho,
        l,
        k_out,
        b_in: cfg.b_in,
        b_out: cfg.b_out,
        b_lambda,
        delta: compute_delta(cfg.b_in, cfg.b_out, b_lambda),
        e_bound: compute_e(l, b_lambda, cfg.b_in, cfg.b_out),
        dual_radius: r,
        objective_bar: problem.eval_objective(&x_bar)?,
        residual_bar: problem.residual(&x_bar).norm(),
        objective_last: problem.eval_objective(&x_last)?,
        residual_last: problem.residual(&x_last).norm(),
        x_bar: x_bar.as_slice().to_vec(),
        lambda_bar: lambda_bar.as_slice().to_vec(),
        x_last: x_last.as_slice().to_vec(),
        lambda_last: history[history.len() - 1].as_slice().to_vec(),
        inner: stats,
        eps_out_max,
        eps_out_bound: pre.out_error_bound(),
        eps_gp_max,
        eps_gp_bound: solver.gp_bound(),
        audit,
        dual_contained: contained,
        lambda_history: history,
        x_history,
    })
}

/// Achieved accuracy of a run against a reference solution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verification {
    pub f_star: f64,
    pub lambda_star: Vec<f64>,
    /// `f(x̄_K) − f*`
    pub opt_gap: f64,
    /// `‖Ax̄_K − b‖`
    pub infeasibility: f64,
    pub bounds: PrimalBounds,
    pub opt_within: bool,
    pub feas_within: bool,
    /// `0, 2λ*, λ* + 1 ∈ D`
    pub dual_box_admits: bool,
}

impl Verification {
    pub fn passed(&self) -> bool {
        self.opt_within && self.feas_within
    }

    /// Largest bound magnitude, to compare against the target accuracy.
    pub fn worst_bound(&self) -> f64 {
        self.bounds.opt_hi.max(-self.bounds.opt_lo).max(self.bounds.feas)
    }
}

pub fn verify(
    report: &SolveReport,
    problem: &Problem,
    f_star: f64,
    lambda_star: &DVector<f64>,
) -> Verification {
    let x_bar = report.x_bar();
    let r_bar = problem.residual(&x_bar);
    let bounds = primal_bounds(
        report.l,
        report.lambda(1),
        report.lambda(0),
        lambda_star,
        &r_bar,
        report.k_out,
        report.e_bound,
    );
    let gap = report.objective_bar - f_star;
    let infeas = r_bar.norm();
    let dual_box = DualBox {
        radius: report.dual_radius,
        p: lambda_star.len(),
    };
    Verification {
        f_star,
        lambda_star: lambda_star.as_slice().to_vec(),
        opt_gap: gap,
        infeasibility: infeas,
        bounds,
        opt_within: gap >= bounds.opt_lo && gap <= bounds.opt_hi,
        feas_within: bounds.feas_trivial || infeas <= bounds.feas,
        dual_box_admits: dual_box.admits(lambda_star),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inner::StopMode;
    use crate::problem::{BoxSet, EqualityConstraints, Objective};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    fn two_var() -> Problem {
        Problem::new(
            Objective::Quadratic {
                h: DMatrix::identity(2, 2),
                q: DVector::zeros(2),
            },
            EqualityConstraints::new(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), dv(&[1.0]))
                .unwrap(),
            BoxSet::uniform(2, -1.0, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn delta_and_e_arithmetic() {
        assert_eq!(compute_delta(0.0, 0.0, 5.0), 0.0);
        assert_relative_eq!(compute_delta(0.01, 0.001, 10.0), 0.04, epsilon = 1e-15);
        assert_eq!(compute_e(2.0, 10.0, 0.0, 0.0), 0.0);
        assert_relative_eq!(
            compute_e(2.0, 10.0, 0.01, 0.001),
            3.0 * 0.01 + 3.0 * 0.01 + 0.75e-6,
            epsilon = 1e-15
        );
    }

    #[test]
    fn dual_gap_scaling() {
        let z = dv(&[0.7]);
        assert_eq!(dual_gap_bound(1.0, &z, &z, 10, 0.0), 0.0);
        let a = dual_gap_bound(1.0, &dv(&[0.0]), &z, 10, 0.0);
        let b = dual_gap_bound(1.0, &dv(&[0.0]), &z, 20, 0.0);
        assert_relative_eq!(a, 2.0 * b, epsilon = 1e-15);
    }

    #[test]
    fn feasibility_bound_trivial_when_feasible() {
        let b = primal_bounds(
            1.0,
            &dv(&[0.1]),
            &dv(&[0.0]),
            &dv(&[0.2]),
            &dv(&[0.0]),
            10,
            0.0,
        );
        assert!(b.feas_trivial);
    }

    #[test]
    fn dual_box_projection() {
        let d = DualBox::new(1.0, 2).unwrap();
        assert_eq!(d.project(&dv(&[3.0, -0.5])), dv(&[1.0, -0.5]));
        assert_relative_eq!(d.diameter(), 2.0 * 2f64.sqrt());
        assert!(d.admits(&dv(&[-0.5, 0.0])));
        assert!(!d.admits(&dv(&[0.6, 0.0])));
    }

    #[test]
    fn float_run_on_two_var_qp() {
        let p = two_var();
        let cfg = AlmConfig::new(2.0, DualBox::new(4.0, 1).unwrap(), 200, Arithmetic::Float)
            .with_budgets(1e-12, 0.0);
        let stop = StopConfig {
            b_in: 1e-12,
            sigma: Some(1.0),
            k_in_max: 100_000,
            mode: StopMode::Criterion,
        };
        let rep = run_alm(&p, &cfg, &stop).unwrap();
        assert!((rep.lambda_last[0] + 0.5).abs() < 1e-6);
        assert!((rep.objective_last - 0.25).abs() < 1e-6);
        assert!(rep.dual_contained);
        assert_eq!(rep.lambda_history.len(), 202);
        let v = verify(&rep, &p, 0.25, &dv(&[-0.5]));
        assert!(v.passed(), "{v:?}");
        assert!(v.dual_box_admits);
    }

    #[test]
    fn inactive_constraint_keeps_multiplier_at_zero() {
        // Unconstrained minimizer 0 already satisfies x1 + x2 = 0.
        let p = Problem::new(
            Objective::Quadratic {
                h: DMatrix::identity(2, 2),
                q: DVector::zeros(2),
            },
            EqualityConstraints::new(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), dv(&[0.0]))
                .unwrap(),
            BoxSet::uniform(2, -1.0, 1.0).unwrap(),
        )
        .unwrap();
        let cfg = AlmConfig::new(2.0, DualBox::new(1.0, 1).unwrap(), 50, Arithmetic::Float);
        let stop = StopConfig {
            b_in: 1e-14,
            sigma: Some(1.0),
            k_in_max: 100_000,
            mode: StopMode::Criterion,
        };
        let rep = run_alm(&p, &cfg, &stop).unwrap();
        assert!(rep.lambda_history.iter().all(|l| l[0].abs() < 1e-6));
    }
}
