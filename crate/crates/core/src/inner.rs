//! Projected-gradient solver for the primal subproblem `min_{x∈X} L_ρ(x; λ)`.
//!
//! The fixed-point step is
//! `x⁺ = Π_X[x − fi(fi(M1)x) − fi(fi(M2)λ) + fi(V1) − fi(N(x))]` with
//! `M1 = (Q + ρAᵀA)/L_p`, `M2 = Aᵀ/L_p`, `V1 = (ρAᵀb − q)/L_p` and `N` the
//! scaled gradient of the log pieces (evaluated in floating point from the
//! exact fixed-point iterate and cast once per coordinate).

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fxp::{
    fx_matvec, fx_project_box, FxError, FxFormat, FxMatrix, FxVector, OverflowAudit,
    OverflowPolicy,
};
use crate::linalg;
use crate::problem::{LogPiece, Problem, ProblemError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error(transparent)]
    Fx(#[from] FxError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Arithmetic used for the iterate path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Arithmetic {
    Float,
    Fixed {
        fmt: FxFormat,
        policy: OverflowPolicy,
    },
}

impl Arithmetic {
    pub fn format(&self) -> Option<FxFormat> {
        match self {
            Arithmetic::Float => None,
            Arithmetic::Fixed { fmt, .. } => Some(*fmt),
        }
    }
}

/// Quantized twins of the iteration matrices.
#[derive(Debug, Clone)]
pub struct FixedData {
    pub fmt: FxFormat,
    pub policy: OverflowPolicy,
    pub m1: FxMatrix,
    pub m2: FxMatrix,
    pub v1: FxVector,
    pub m3: FxMatrix,
    pub v2: FxVector,
    pub lo: FxVector,
    pub hi: FxVector,
}

/// Iteration data shared by the primal and dual updates.
#[derive(Debug, Clone)]
pub struct Precomputed {
    problem: Problem,
    rho: f64,
    lp: f64,
    /// `L = 2/ρ`.
    l: f64,
    pub m1: DMatrix<f64>,
    pub m2: DMatrix<f64>,
    pub v1: DVector<f64>,
    /// `M3 = A/L`
    pub m3: DMatrix<f64>,
    /// `V2 = b/L`
    pub v2: DVector<f64>,
    hess: DMatrix<f64>,
    lin: DVector<f64>,
    logs: Vec<LogPiece>,
    fixed: Option<FixedData>,
}

fn quantize_matrix(
    m: &DMatrix<f64>,
    fmt: FxFormat,
    policy: OverflowPolicy,
    audit: &mut OverflowAudit,
) -> Result<FxMatrix, FxError> {
    FxMatrix::quantize(m.nrows(), m.ncols(), &linalg::row_major(m), fmt, policy, audit)
}

fn quantize_vector(
    v: &DVector<f64>,
    fmt: FxFormat,
    policy: OverflowPolicy,
    audit: &mut OverflowAudit,
) -> Result<FxVector, FxError> {
    FxVector::quantize(v.as_slice(), fmt, policy, audit)
}

impl Precomputed {
    pub fn new(
        problem: &Problem,
        rho: f64,
        arith: Arithmetic,
        audit: &mut OverflowAudit,
    ) -> Result<Self, SolverError> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(ProblemError::Penalty(rho).into());
        }
        let a = problem.a();
        let b = problem.b();
        let split = problem.smooth_split();
        let lp = problem.lipschitz_lp(rho);
        if lp <= 0.0 {
            return Err(SolverError::Config(
                "subproblem has zero curvature; L_p must be positive".into(),
            ));
        }
        let l = 2.0 / rho;
        let at = a.transpose();
        let hess = &split.quad + &at * a * rho;
        let lin = &split.lin - &at * b * rho;
        let m1 = &hess / lp;
        let m2 = &at / lp;
        let v1 = -&lin / lp;
        let m3 = a / l;
        let v2 = b / l;
        let fixed = match arith {
            Arithmetic::Float => None,
            Arithmetic::Fixed { fmt, policy } => {
                problem.check_representable(fmt)?;
                Some(FixedData {
                    fmt,
                    policy,
                    m1: quantize_matrix(&m1, fmt, policy, audit)?,
                    m2: quantize_matrix(&m2, fmt, policy, audit)?,
                    v1: quantize_vector(&v1, fmt, policy, audit)?,
                    m3: quantize_matrix(&m3, fmt, policy, audit)?,
                    v2: quantize_vector(&v2, fmt, policy, audit)?,
                    lo: quantize_vector(problem.bounds().lo(), fmt, policy, audit)?,
                    hi: quantize_vector(problem.bounds().hi(), fmt, policy, audit)?,
                })
            }
        };
        Ok(Self {
            problem: problem.clone(),
            rho,
            lp,
            l,
            m1,
            m2,
            v1,
            m3,
            v2,
            hess,
            lin,
            logs: split.logs,
            fixed,
        })
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn lp(&self) -> f64 {
        self.lp
    }

    pub fn dual_constant(&self) -> f64 {
        self.l
    }

    pub fn fixed(&self) -> Option<&FixedData> {
        self.fixed.as_ref()
    }

    pub fn has_logs(&self) -> bool {
        !self.logs.is_empty()
    }

    pub fn lo(&self) -> &DVector<f64> {
        self.problem.bounds().lo()
    }

    pub fn hi(&self) -> &DVector<f64> {
        self.problem.bounds().hi()
    }

    /// `∇ₓL_ρ(x; λ)` in floating point.
    pub fn gradient(&self, x: &DVector<f64>, lambda: &DVector<f64>) -> DVector<f64> {
        let mut g = &self.hess * x + &self.lin;
        g.gemv_tr(1.0, self.problem.a(), lambda, 1.0);
        for piece in &self.logs {
            g.axpy(piece.derivative(x), &piece.row, 1.0);
        }
        g
    }

    /// `N(x) = (1/L_p) Σ −aᵢ/(aᵢᵀx − cᵢ)`.
    fn log_step(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(x.len());
        for piece in &self.logs {
            out.axpy(piece.derivative(x) / self.lp, &piece.row, 1.0);
        }
        out
    }

    pub fn al_value(&self, x: &DVector<f64>, lambda: &DVector<f64>) -> Result<f64, SolverError> {
        Ok(self.problem.eval_al(x, lambda, self.rho)?)
    }

    /// Certified bound on the equivalent gradient error of one fixed-point step,
    /// `L_p √n ((1+x∞)n + (1+λ∞)p + k) 2^-(fl+1)` with `k = 2` when log pieces
    /// add a cast, else 1. Zero in float mode.
    pub fn gp_error_bound(&self, lambda_inf: f64) -> f64 {
        let Some(fx) = &self.fixed else { return 0.0 };
        let n = self.problem.n() as f64;
        let p = self.problem.p() as f64;
        let x_inf = self.problem.bounds().inf_radius();
        let k = if self.has_logs() { 2.0 } else { 1.0 };
        self.lp * n.sqrt() * ((1.0 + x_inf) * n + (1.0 + lambda_inf) * p + k) * half_lsb(fx.fmt)
    }

    /// Certified bound on the dual update error `L √p ((1+x∞)n + 1) 2^-(fl+1)`.
    pub fn out_error_bound(&self) -> f64 {
        let Some(fx) = &self.fixed else { return 0.0 };
        let n = self.problem.n() as f64;
        let p = self.problem.p() as f64;
        let x_inf = self.problem.bounds().inf_radius();
        self.l * p.sqrt() * ((1.0 + x_inf) * n + 1.0) * half_lsb(fx.fmt)
    }
}

pub(crate) fn half_lsb(fmt: FxFormat) -> f64 {
    (-(fmt.fl() as f64 + 1.0)).exp2()
}

/// `min_{s ∈ N_X(x)} ‖g + s‖` for a box, computed coordinatewise.
pub fn stationarity_residual(
    x: &DVector<f64>,
    g: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> f64 {
    let mut acc = 0.0;
    for i in 0..x.len() {
        let gi = g[i];
        let cancelled = (x[i] <= lo[i] && gi >= 0.0) || (x[i] >= hi[i] && gi <= 0.0);
        if !cancelled {
            acc += gi * gi;
        }
    }
    acc.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopMode {
    /// Stop when the stationarity residual drops below `√(σ B_in / 2)`.
    Criterion,
    /// Run the certified iteration count and return the averaged iterate.
    Cap,
    /// Criterion, falling back to the averaged iterate at the cap.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopConfig {
    pub b_in: f64,
    pub sigma: Option<f64>,
    pub k_in_max: u64,
    pub mode: StopMode,
}

impl StopConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.b_in > 0.0) {
            return Err(SolverError::Config(format!("B_in must be > 0, got {}", self.b_in)));
        }
        if self.k_in_max == 0 {
            return Err(SolverError::Config("K_in must be >= 1".into()));
        }
        match (self.mode, self.sigma) {
            (StopMode::Cap, _) => Ok(()),
            (_, Some(s)) if s > 0.0 && s.is_finite() => Ok(()),
            (_, Some(s)) => Err(SolverError::Config(format!("sigma must be > 0, got {s}"))),
            (_, None) => Err(SolverError::Config(
                "stationarity criterion needs a quadratic-growth constant; use cap mode".into(),
            )),
        }
    }

    /// `τ = √(σ B_in / 2)`.
    pub fn threshold(&self) -> Option<f64> {
        self.sigma.map(|s| (s * self.b_in / 2.0).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopReason {
    Criterion,
    Cap,
    /// Criterion mode hit `k_in_max` without firing.
    Exhausted,
}

#[derive(Debug, Clone)]
pub struct InnerResult {
    pub x: DVector<f64>,
    pub x_fx: Option<FxVector>,
    pub iters: u64,
    pub residual: f64,
    pub stop: StopReason,
    /// Certified bound on `L_ρ(x̃; λ) − min L_ρ(·; λ)`.
    pub gap_bound: f64,
    /// Largest measured `‖ε_gp‖` over the steps of this call.
    pub max_eps_gp: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub call: u64,
    pub iter: u64,
    pub value: f64,
    pub residual: f64,
    pub saturations: u64,
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "call,iter,value,residual,saturations")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.call, r.iter, r.value, r.residual, r.saturations)?;
    }
    Ok(())
}

/// Stateful subproblem solver: warm starts from its previous output.
#[derive(Debug)]
pub struct InnerSolver<'a> {
    pre: &'a Precomputed,
    gp_bound: f64,
    warm: Option<DVector<f64>>,
    warm_fx: Option<FxVector>,
    measure: bool,
    trace: Option<Vec<TraceRow>>,
    calls: u64,
}

/// Round-half-even `sum / k` for the fixed-point average.
fn div_round_even(sum: i128, k: i128) -> i128 {
    let q = sum.div_euclid(k);
    let r = sum.rem_euclid(k);
    match (2 * r).cmp(&k) {
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal if q & 1 == 1 => q + 1,
        _ => q,
    }
}

impl<'a> InnerSolver<'a> {
    /// `lambda_inf` bounds `‖λ‖∞` over the calls (the dual box radius); it
    /// only enters the certified error bound.
    pub fn new(pre: &'a Precomputed, lambda_inf: f64) -> Self {
        Self {
            pre,
            gp_bound: pre.gp_error_bound(lambda_inf),
            warm: None,
            warm_fx: None,
            measure: false,
            trace: None,
            calls: 0,
        }
    }

    /// Measure the realized `‖ε_gp‖` on every fixed-point step.
    pub fn measure_errors(mut self, on: bool) -> Self {
        self.measure = on;
        self
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn trace(&self) -> Option<&[TraceRow]> {
        self.trace.as_deref()
    }

    pub fn gp_bound(&self) -> f64 {
        self.gp_bound
    }

    pub fn set_warm_start(&mut self, x: DVector<f64>) {
        self.warm = Some(self.pre.problem.bounds().project(&x));
        self.warm_fx = None;
    }

    fn start_float(&self) -> DVector<f64> {
        self.warm
            .clone()
            .unwrap_or_else(|| self.pre.problem.bounds().midpoint())
    }

    fn start_fixed(&self, fx: &FixedData, audit: &mut OverflowAudit) -> Result<FxVector, SolverError> {
        if let Some(w) = &self.warm_fx {
            return Ok(w.clone());
        }
        let x0 = self.start_float();
        let q = FxVector::quantize(x0.as_slice(), fx.fmt, fx.policy, audit)?;
        Ok(fx_project_box(&q, &fx.lo, &fx.hi)?)
    }

    fn cap_gap_bound(&self, count: u64) -> f64 {
        let bx = self.pre.problem.bounds().diameter();
        self.pre.lp * bx * bx / (2.0 * count as f64) + 2.0 * self.gp_bound * bx
    }

    /// Solve in floating point at multiplier `lambda`.
    pub fn solve_float(
        &mut self,
        lambda: &DVector<f64>,
        cfg: &StopConfig,
    ) -> Result<InnerResult, SolverError> {
        cfg.validate()?;
        self.calls += 1;
        let pre = self.pre;
        let (lo, hi) = (pre.lo(), pre.hi());
        let bounds = pre.problem.bounds();
        let tau = cfg.threshold();
        let use_criterion = cfg.mode != StopMode::Cap;
        let shift = &pre.m2 * lambda - &pre.v1;
        let mut x = self.start_float();
        let mut sum = DVector::zeros(x.len());
        let mut residual = f64::INFINITY;
        let mut k = 0u64;
        let mut stop = StopReason::Exhausted;
        while k < cfg.k_in_max {
            let mut y = &x - &pre.m1 * &x - &shift;
            if pre.has_logs() {
                y -= pre.log_step(&x);
            }
            x = bounds.project(&y);
            k += 1;
            sum += &x;
            if use_criterion || self.trace.is_some() {
                let g = pre.gradient(&x, lambda);
                residual = stationarity_residual(&x, &g, lo, hi);
            }
            if let Some(tr) = self.trace.as_mut() {
                tr.push(TraceRow {
                    call: self.calls,
                    iter: k,
                    value: pre.al_value(&x, lambda)?,
                    residual,
                    saturations: 0,
                });
            }
            if use_criterion && tau.is_some_and(|t| residual <= t) {
                stop = StopReason::Criterion;
                break;
            }
        }
        if stop != StopReason::Criterion && cfg.mode != StopMode::Criterion {
            stop = StopReason::Cap;
        }
        let (x_out, gap_bound) = match stop {
            StopReason::Cap => {
                let avg = sum / k as f64;
                (bounds.project(&avg), self.cap_gap_bound(k))
            }
            _ => {
                let s = cfg.sigma.unwrap_or(0.0);
                (x.clone(), 2.0 * residual * residual / s)
            }
        };
        if stop == StopReason::Cap {
            let g = pre.gradient(&x_out, lambda);
            residual = stationarity_residual(&x_out, &g, lo, hi);
        }
        self.warm = Some(x);
        Ok(InnerResult {
            x: x_out,
            x_fx: None,
            iters: k,
            residual,
            stop,
            gap_bound,
            max_eps_gp: 0.0,
        })
    }

    /// Solve in simulated fixed point at the fixed-point multiplier `lambda`.
    pub fn solve_fixed(
        &mut self,
        lambda: &FxVector,
        cfg: &StopConfig,
        audit: &mut OverflowAudit,
    ) -> Result<InnerResult, SolverError> {
        cfg.validate()?;
        let pre = self.pre;
        let fx = pre
            .fixed
            .as_ref()
            .ok_or_else(|| SolverError::Config("precomputed data has no fixed-point twin".into()))?;
        self.calls += 1;
        let (fmt, policy) = (fx.fmt, fx.policy);
        let (lo, hi) = (pre.lo(), pre.hi());
        let lambda_real = DVector::from_vec(lambda.to_real());
        let tau = cfg.threshold();
        let use_criterion = cfg.mode != StopMode::Cap;
        let shift_real = &pre.m2 * &lambda_real - &pre.v1;

        let t2 = fx_matvec(&fx.m2, lambda, fmt, policy, audit)?;
        let mut x = self.start_fixed(fx, audit)?;
        let n = x.len();
        let mut sum = vec![0i128; n];
        let mut residual = f64::INFINITY;
        let mut max_eps = 0.0f64;
        let mut k = 0u64;
        let mut stop = StopReason::Exhausted;
        let sat_before = audit.saturations;
        while k < cfg.k_in_max {
            let x_real = DVector::from_vec(x.to_real());
            let a = fx_matvec(&fx.m1, &x, fmt, policy, audit)?;
            let mut y = x.sub(&a, policy, audit)?;
            y = y.sub(&t2, policy, audit)?;
            y = y.add(&fx.v1, policy, audit)?;
            if pre.has_logs() {
                let nl = pre.log_step(&x_real);
                let nq = FxVector::quantize(nl.as_slice(), fmt, policy, audit)?;
                y = y.sub(&nq, policy, audit)?;
            }
            if self.measure {
                let mut exact = &x_real - &pre.m1 * &x_real - &shift_real;
                if pre.has_logs() {
                    exact -= pre.log_step(&x_real);
                }
                let realized = DVector::from_vec(y.to_real());
                max_eps = max_eps.max(pre.lp * (exact - realized).norm());
            }
            let next = fx_project_box(&y, &fx.lo, &fx.hi)?;
            let stalled = next == x;
            x = next;
            k += 1;
            for (s, &r) in sum.iter_mut().zip(x.raw()) {
                *s += r as i128;
            }
            if use_criterion || self.trace.is_some() {
                let xr = DVector::from_vec(x.to_real());
                let g = pre.gradient(&xr, &lambda_real);
                residual = stationarity_residual(&xr, &g, lo, hi);
                if let Some(tr) = self.trace.as_mut() {
                    tr.push(TraceRow {
                        call: self.calls,
                        iter: k,
                        value: pre.al_value(&xr, &lambda_real)?,
                        residual,
                        saturations: audit.saturations - sat_before,
                    });
                }
            }
            if use_criterion && tau.is_some_and(|t| residual <= t) {
                stop = StopReason::Criterion;
                break;
            }
            if stalled && self.trace.is_none() {
                // The map is deterministic, so every remaining iterate equals
                // `x`: account for them without running them.
                let rest = (cfg.k_in_max - k) as i128;
                for (s, &r) in sum.iter_mut().zip(x.raw()) {
                    *s = s
                        .checked_add(rest.checked_mul(r as i128).ok_or_else(|| {
                            SolverError::Config("iterate sum exceeds the accumulator".into())
                        })?)
                        .ok_or_else(|| SolverError::Config("iterate sum exceeds the accumulator".into()))?;
                }
                k = cfg.k_in_max;
                break;
            }
        }
        if stop != StopReason::Criterion && cfg.mode != StopMode::Criterion {
            stop = StopReason::Cap;
        }
        let (x_out, gap_bound) = match stop {
            StopReason::Cap => {
                let raw: Vec<i64> = sum
                    .iter()
                    .map(|&s| div_round_even(s, k as i128) as i64)
                    .collect();
                let avg = FxVector::from_raw(raw, fmt)?;
                let avg = fx_project_box(&avg, &fx.lo, &fx.hi)?;
                let xr = DVector::from_vec(avg.to_real());
                let g = pre.gradient(&xr, &lambda_real);
                residual = stationarity_residual(&xr, &g, lo, hi);
                (avg, self.cap_gap_bound(k))
            }
            _ => {
                let s = cfg.sigma.unwrap_or(0.0);
                (x.clone(), 2.0 * residual * residual / s)
            }
        };
        self.warm_fx = Some(x);
        Ok(InnerResult {
            x: DVector::from_vec(x_out.to_real()),
            x_fx: Some(x_out),
            iters: k,
            residual,
            stop,
            gap_bound,
            max_eps_gp: max_eps,
        })
    }

    /// Uncertified high-accuracy solve (accelerated projected gradient with
    /// adaptive restart) until the stationarity residual is `<= tol`.
    /// Returns the point, its residual and the iteration count.
    pub fn minimize(
        &mut self,
        lambda: &DVector<f64>,
        tol: f64,
        max_iter: u64,
    ) -> (DVector<f64>, f64, u64) {
        let pre = self.pre;
        let bounds = pre.problem.bounds();
        let (lo, hi) = (pre.lo(), pre.hi());
        let step = 1.0 / pre.lp;
        let mut x = self.start_float();
        let mut y = x.clone();
        let mut t = 1.0f64;
        let mut best = (x.clone(), f64::INFINITY);
        let mut k = 0;
        while k < max_iter {
            k += 1;
            let gy = pre.gradient(&y, lambda);
            let x_new = bounds.project(&(&y - gy * step));
            let g = pre.gradient(&x_new, lambda);
            let res = stationarity_residual(&x_new, &g, lo, hi);
            if res < best.1 {
                best = (x_new.clone(), res);
            }
            if res <= tol {
                break;
            }
            let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let dx = &x_new - &x;
            if (&y - &x_new).dot(&dx) > 0.0 {
                t = 1.0;
                y = x_new.clone();
            } else {
                y = &x_new + dx * ((t - 1.0) / t_new);
                t = t_new;
            }
            x = x_new;
        }
        self.warm = Some(best.0.clone());
        (best.0, best.1, k)
    }
}
