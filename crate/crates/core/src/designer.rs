//! Turn a target accuracy `ε` into a certified configuration: dual box,
//! error budgets, fraction/word lengths and iteration counts.
//!
//! A design covers a family of problems (for example the successive local
//! problems of a consensus run); every constant is the worst case over the
//! family.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alm::{compute_e, AlmConfig, DualBox};
use crate::fxp::{FxFormat, FxMatrix, FxVector, OverflowAudit, OverflowPolicy};
use crate::inner::{Arithmetic, Precomputed, StopConfig, StopMode};
use crate::linalg;
use crate::par::Exec;
use crate::problem::{Objective, Problem, ProblemError, TermKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DesignError {
    #[error("invalid design input: {0}")]
    Input(String),
    #[error("constraint matrix is zero")]
    ZeroMatrix,
    #[error("infeasible design: {0}")]
    Infeasible(String),
    #[error("not strongly convex: {0}")]
    NotStronglyConvex(String),
    #[error("Hoffman brute force needs n <= {max}, got n = {n}; supply theta")]
    TooLarge { n: usize, max: usize },
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Largest `n` for the brute-force Hoffman constant.
pub const HOFFMAN_MAX_N: usize = 6;

/// Coarsest grid the dual radius is rounded to before `fl` is known.
const RADIUS_GRID_BITS: u32 = 4;

#[derive(Debug, Clone)]
pub struct DesignInput<'a> {
    pub problems: &'a [Problem],
    pub eps: f64,
    pub alpha: f64,
    pub rho: f64,
    /// Safety factor applied to sampled bounds.
    pub scale: f64,
    pub samples: usize,
    pub seed: u64,
    pub theta: Option<f64>,
    pub exec: Exec,
}

impl<'a> DesignInput<'a> {
    pub fn new(problems: &'a [Problem], eps: f64) -> Self {
        Self {
            problems,
            eps,
            alpha: 0.5,
            rho: 2.0,
            scale: 1.5,
            samples: 10_000,
            seed: 0,
            theta: None,
            exec: Exec::default(),
        }
    }

    fn validate(&self) -> Result<(), DesignError> {
        if self.problems.is_empty() {
            return Err(DesignError::Input("no problems".into()));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(DesignError::Input(format!("eps must be > 0, got {}", self.eps)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(DesignError::Input(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(DesignError::Input(format!("rho must be > 0, got {}", self.rho)));
        }
        if !(self.scale >= 1.0) {
            return Err(DesignError::Input(format!("scale must be >= 1, got {}", self.scale)));
        }
        let (n, p) = (self.problems[0].n(), self.problems[0].p());
        if self.problems.iter().any(|q| q.n() != n || q.p() != p) {
            return Err(DesignError::Input("family members differ in dimension".into()));
        }
        if let Some(t) = self.theta {
            if !(t > 0.0 && t.is_finite()) {
                return Err(DesignError::Input(format!("theta must be > 0, got {t}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignReport {
    pub eps: f64,
    pub alpha: f64,
    pub rho: f64,
    /// `L = 2/ρ`
    pub l: f64,
    pub l_p: f64,
    pub n: usize,
    pub p: usize,
    pub b_x: f64,
    pub x_inf: f64,
    pub g: f64,
    pub sigma_tilde_min: f64,
    pub lambda_bound: f64,
    pub dual_radius: f64,
    pub b_lambda: f64,
    pub b_out: f64,
    pub b_in: f64,
    /// True when `B_out` was shrunk to keep the quadratic term under 1% of `ε/2`.
    pub b_out_shrunk: bool,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    /// Unrounded lower bounds on `fl` from the dual and primal error budgets.
    pub fl_dual: f64,
    pub fl_primal: f64,
    /// Smallest `fl` at which the constraint and box data are exact.
    pub fl_data: u32,
    pub fl: u32,
    pub wl: u32,
    pub k_in: u64,
    pub k_out: u64,
    pub phi1_max: f64,
    pub sigma: f64,
    pub theta: f64,
    pub theta_source: String,
    /// Error constant `E` at the chosen budgets; required `<= ε/2`.
    pub e_total: f64,
    /// `(2/L + 2)(1 + √(2L_p)B_x)√B_in + C1·B_out`, the budget-split variant.
    pub e_split: f64,
}

impl DesignReport {
    pub fn format(&self) -> FxFormat {
        FxFormat::new(self.wl, self.fl).expect("designed format is valid")
    }

    pub fn dual_box(&self) -> DualBox {
        DualBox::new(self.dual_radius, self.p).expect("designed radius is positive")
    }

    pub fn alm_config(&self, arithmetic: Arithmetic) -> AlmConfig {
        let mut cfg = AlmConfig::new(self.rho, self.dual_box(), self.k_out, arithmetic)
            .with_budgets(self.b_in, self.b_out);
        cfg.b_lambda = self.b_lambda;
        cfg
    }

    pub fn fixed(&self, policy: OverflowPolicy) -> Arithmetic {
        Arithmetic::Fixed {
            fmt: self.format(),
            policy,
        }
    }

    /// Criterion with the certified cap as fallback.
    pub fn stop_config(&self) -> StopConfig {
        StopConfig {
            b_in: self.b_in,
            sigma: Some(self.sigma),
            k_in_max: self.k_in,
            mode: StopMode::Both,
        }
    }

    pub fn summary(&self) -> String {
        let rows: Vec<(&str, String)> = vec![
            ("eps", format!("{}", self.eps)),
            ("alpha", format!("{}", self.alpha)),
            ("rho / L / L_p", format!("{} / {} / {:.6}", self.rho, self.l, self.l_p)),
            ("B_x / x_inf", format!("{:.6} / {}", self.b_x, self.x_inf)),
            ("G / sigma~min(A)", format!("{:.6} / {:.6}", self.g, self.sigma_tilde_min)),
            ("lambda bound / D radius", format!("{:.6} / {}", self.lambda_bound, self.dual_radius)),
            ("B_lambda", format!("{:.6}", self.b_lambda)),
            ("B_out / B_in", format!("{:.4e} / {:.4e}", self.b_out, self.b_in)),
            ("E", format!("{:.4e}", self.e_total)),
            ("fl-wl", format!("{}-{}", self.fl, self.wl)),
            ("K_in / K_out", format!("{} / {}", self.k_in, self.k_out)),
            ("sigma (theta)", format!("{:.6} ({:.6}, {})", self.sigma, self.theta, self.theta_source)),
        ];
        let w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        rows.iter()
            .map(|(k, v)| format!("{k:<w$}  {v}\n"))
            .collect()
    }
}

/// `‖λ*‖ ≤ G / σ̃_min(A)`.
pub fn multiplier_bound(g: f64, a: &DMatrix<f64>) -> Result<f64, DesignError> {
    let s = linalg::sigma_min_nonzero(a).ok_or(DesignError::ZeroMatrix)?;
    Ok(g / s)
}

/// `scale · max ‖∇f(x)‖` over `samples` uniform points and every box corner.
pub fn estimate_g(
    problem: &Problem,
    samples: usize,
    scale: f64,
    seed: u64,
    exec: Exec,
) -> Result<f64, DesignError> {
    let bounds = problem.bounds();
    let n = problem.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<DVector<f64>> = (0..samples)
        .map(|_| DVector::from_fn(n, |i, _| rng.random_range(bounds.lo()[i]..=bounds.hi()[i])))
        .collect();
    if n <= 20 {
        points.extend((0..1u64 << n).map(|m| bounds.corner(m)));
    }
    let norms = exec.map(&points, |x| problem.eval_subgradient(x).map(|g| g.norm()));
    let mut best = 0.0f64;
    for v in norms {
        best = best.max(v?);
    }
    Ok(scale * best)
}

/// `r = max(2λb, λb + 1)` rounded up to a multiple of `2^-grid_bits`.
pub fn dual_radius(lambda_bound_inf: f64, grid_bits: u32) -> f64 {
    let r = (2.0 * lambda_bound_inf).max(lambda_bound_inf + 1.0);
    let step = (-(grid_bits as f64)).exp2();
    (r / step).ceil() * step
}

/// `(B_out, B_in)` from the budget split.
pub fn split_budget(eps: f64, alpha: f64, c1: f64, c2: f64) -> (f64, f64) {
    let b_out = alpha * eps / (2.0 * c1);
    let b_in = ((1.0 - alpha) * eps / (2.0 * c2)).powi(2);
    (b_out, b_in)
}

/// Strong-convexity pieces of `L_ρ(·; λ)`: stacked rows `Ã`, smallest modulus,
/// and the linear parts that must lie in the row space of `Ã`.
fn qg_structure(problem: &Problem, rho: f64) -> (DMatrix<f64>, f64, Vec<DVector<f64>>) {
    let n = problem.n();
    let mut blocks: Vec<DMatrix<f64>> = Vec::new();
    let mut moduli = Vec::new();
    let mut linear = Vec::new();
    match problem.objective() {
        Objective::Quadratic { h, q } => {
            if h.amax() > 0.0 {
                blocks.push(linalg::psd_sqrt(h));
                moduli.push(1.0);
            }
            linear.push(q.clone());
        }
        Objective::Separable { terms } => {
            for t in terms {
                match t.kind {
                    TermKind::Linear => linear.push(t.rows.row(0).transpose()),
                    _ => {
                        blocks.push(t.rows.clone());
                        moduli.push(t.modulus());
                    }
                }
            }
        }
    }
    if problem.p() > 0 {
        blocks.push(problem.a().clone());
        moduli.push(rho);
    }
    let refs: Vec<&DMatrix<f64>> = blocks.iter().collect();
    let stacked = linalg::vstack(&refs, n);
    let min_mod = moduli.iter().cloned().fold(f64::INFINITY, f64::min);
    (stacked, min_mod, linear)
}

/// Hoffman constant of `{x : Ãx = t, Cx ≤ d}` with `C = [I; −I]` (a box),
/// by enumerating row subsets of `C` that are independent modulo `Ã`.
pub fn hoffman_theta_bruteforce(a_tilde: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<f64, DesignError> {
    let n = a_tilde.ncols();
    if n > HOFFMAN_MAX_N || c.nrows() > 2 * HOFFMAN_MAX_N {
        return Err(DesignError::TooLarge {
            n,
            max: HOFFMAN_MAX_N,
        });
    }
    let base_rank = linalg::rank(a_tilde);
    let mut theta = 0.0f64;
    for mask in 0u32..(1u32 << c.nrows()) {
        let rows: Vec<usize> = (0..c.nrows()).filter(|i| mask >> i & 1 == 1).collect();
        if base_rank + rows.len() > n || (base_rank == 0 && rows.is_empty()) {
            continue;
        }
        let sub = DMatrix::from_fn(rows.len(), n, |i, j| c[(rows[i], j)]);
        let stacked = linalg::vstack(&[a_tilde, &sub], n);
        if linalg::rank(&stacked) != base_rank + rows.len() {
            continue;
        }
        if let Some(s) = linalg::sigma_min_nonzero(&stacked) {
            theta = theta.max(1.0 / s);
        }
    }
    Ok(theta)
}

/// Box rows `[I; −I]`.
pub fn box_rows(n: usize) -> DMatrix<f64> {
    let i = DMatrix::<f64>::identity(n, n);
    linalg::vstack(&[&i, &(-&i)], n)
}

/// Quadratic-growth constant `σ = min σᵢ / θ²` of `L_ρ(·; λ)` over the box.
/// Returns `(σ, θ, source)`.
pub fn qg_sigma(
    problem: &Problem,
    rho: f64,
    theta: Option<f64>,
) -> Result<(f64, f64, &'static str), DesignError> {
    let (a_tilde, min_mod, linear) = qg_structure(problem, rho);
    if a_tilde.nrows() == 0 || !(min_mod > 0.0) {
        return Err(DesignError::NotStronglyConvex(
            "a curvature term has zero modulus or none exists".into(),
        ));
    }
    for v in &linear {
        if !linalg::in_row_space(&a_tilde, v) {
            return Err(DesignError::NotStronglyConvex(
                "a linear term is not in the row space of the curvature terms".into(),
            ));
        }
    }
    let (theta, source) = match theta {
        Some(t) => (t, "user"),
        None if linalg::rank(&a_tilde) == problem.n() => {
            let s = linalg::sigma_min_nonzero(&a_tilde).ok_or(DesignError::ZeroMatrix)?;
            (1.0 / s, "full-rank")
        }
        None => (
            hoffman_theta_bruteforce(&a_tilde, &box_rows(problem.n()))?,
            "bruteforce",
        ),
    };
    Ok((min_mod / (theta * theta), theta, source))
}

fn log2(x: f64) -> f64 {
    x.log2()
}

/// Smallest `fl` at which `A`, `b` and the box of every problem are exact.
fn data_fl(problems: &[Problem]) -> Result<u32, DesignError> {
    for fl in 0..FxFormat::MAX_WL - 1 {
        let fmt = FxFormat::new(FxFormat::MAX_WL, fl).expect("valid probe format");
        if problems.iter().all(|p| p.check_representable(fmt).is_ok()) {
            return Ok(fl);
        }
    }
    Err(DesignError::Infeasible(
        "problem data is not exactly representable at any supported fraction length".into(),
    ))
}

/// Range constants `(C5, C6)` from the quantized iteration data at `fl`.
fn range_constants(
    problems: &[Problem],
    rho: f64,
    fl: u32,
    x_inf: f64,
    lambda_inf: f64,
) -> Result<(f64, f64), DesignError> {
    let probe = FxFormat::new(FxFormat::MAX_WL, fl).expect("valid probe format");
    let lsb = probe.lsb();
    let policy = OverflowPolicy::Saturate;
    let mut c5 = 0.0f64;
    let mut c6 = 0.0f64;
    for prob in problems {
        let mut audit = OverflowAudit::default();
        let pre = Precomputed::new(prob, rho, Arithmetic::Float, &mut audit)
            .map_err(|e| DesignError::Input(e.to_string()))?;
        let qm = |m: &DMatrix<f64>, audit: &mut OverflowAudit| {
            FxMatrix::quantize(m.nrows(), m.ncols(), &linalg::row_major(m), probe, policy, audit)
                .map(|q| q.inf_norm())
        };
        let qv = |v: &DVector<f64>, audit: &mut OverflowAudit| {
            FxVector::quantize(v.as_slice(), probe, policy, audit).map(|q| q.inf_norm())
        };
        let err = |e: crate::fxp::FxError| DesignError::Input(e.to_string());
        let m1 = qm(&pre.m1, &mut audit).map_err(err)?;
        let m2 = qm(&pre.m2, &mut audit).map_err(err)?;
        let v1 = qv(&pre.v1, &mut audit).map_err(err)?;
        let m3 = qm(&pre.m3, &mut audit).map_err(err)?;
        let v2 = qv(&pre.v2, &mut audit).map_err(err)?;
        // ‖N(x)‖∞ ≤ (1/L_p) Σ |aᵢ|/lo over the log pieces.
        let mut nu = DVector::<f64>::zeros(prob.n());
        let mut logs = false;
        if let Objective::Separable { terms } = prob.objective() {
            for t in terms {
                if let TermKind::NegLog { lo, .. } = t.kind {
                    logs = true;
                    nu += t.rows.row(0).transpose().abs() / (lo * pre.lp());
                }
            }
        }
        let nu_inf = linalg::inf_norm_vec(&nu);
        let extra = if logs { nu_inf + lsb } else { 0.0 };
        c5 = c5.max(x_inf + m1 * x_inf + m2 * lambda_inf + v1 + lsb + extra);
        c6 = c6.max(lambda_inf + m3 * x_inf + v2 + lsb);
    }
    Ok((c5, c6))
}

/// Full design pipeline.
pub fn design(input: &DesignInput<'_>) -> Result<DesignReport, DesignError> {
    input.validate()?;
    let probs = input.problems;
    let (eps, alpha, rho) = (input.eps, input.alpha, input.rho);
    let n = probs[0].n();
    let p = probs[0].p();
    if p == 0 {
        return Err(DesignError::Input("no equality constraints to design for".into()));
    }
    let l = 2.0 / rho;

    let fold_max = |f: &dyn Fn(&Problem) -> f64| probs.iter().map(f).fold(0.0f64, f64::max);
    let l_p = fold_max(&|q| q.lipschitz_lp(rho));
    let b_x = fold_max(&|q| q.bounds().diameter());
    let x_inf = fold_max(&|q| q.bounds().inf_radius());
    let has_logs = probs.iter().any(|q| {
        matches!(q.objective(), Objective::Separable { terms }
            if terms.iter().any(|t| matches!(t.kind, TermKind::NegLog { .. })))
    });

    let mut g = 0.0f64;
    let mut lambda_bound = 0.0f64;
    let mut sigma_tilde_min = f64::INFINITY;
    for (i, q) in probs.iter().enumerate() {
        let gi = estimate_g(q, input.samples, input.scale, input.seed.wrapping_add(i as u64), input.exec)?;
        let si = linalg::sigma_min_nonzero(q.a()).ok_or(DesignError::ZeroMatrix)?;
        g = g.max(gi);
        sigma_tilde_min = sigma_tilde_min.min(si);
        lambda_bound = lambda_bound.max(gi / si);
    }

    let mut sigma = f64::INFINITY;
    let mut theta = 0.0f64;
    let mut theta_source = "user";
    for q in probs {
        let (s, t, src) = qg_sigma(q, rho, input.theta)?;
        if s < sigma {
            sigma = s;
            theta = t;
            theta_source = src;
        }
    }

    let fl_data = data_fl(probs)?;
    let c2 = (2.0 / l + 2.0) * (1.0 + (2.0 * l_p).sqrt() * b_x);
    let c3 = l * (p as f64).sqrt() * ((1.0 + x_inf) * n as f64 + 1.0);
    let k_log = if has_logs { 2.0 } else { 1.0 };
    let quad_coef = 0.5 + 0.5 / l;

    let mut grid_bits = RADIUS_GRID_BITS;
    loop {
        let radius = dual_radius(lambda_bound, grid_bits);
        let sqrt_p = (p as f64).sqrt();
        let b_lambda0 = 2.0 * sqrt_p * radius;
        let (b_out0, _) = split_budget(eps, alpha, (4.0 / l + 3.0) * b_lambda0, c2);
        let b_lambda = 2.0 * sqrt_p * (radius + b_out0);
        let c1 = (4.0 / l + 3.0) * b_lambda;
        let (mut b_out, b_in) = split_budget(eps, alpha, c1, c2);
        let mut shrunk = false;
        let quad_cap = 0.01 * eps / 2.0;
        if quad_coef * b_out * b_out >= quad_cap {
            b_out = 0.999 * (quad_cap / quad_coef).sqrt();
            shrunk = true;
            log::debug!("B_out shrunk to {b_out:.4e} to bound the quadratic error term");
        }
        if !(b_in > 0.0) || !(b_out > 0.0) {
            return Err(DesignError::Infeasible("an error budget underflows to zero".into()));
        }
        let e_total = compute_e(l, b_lambda, b_in, b_out);
        if e_total > eps / 2.0 {
            return Err(DesignError::Infeasible(format!(
                "error constant {e_total:.4e} exceeds eps/2 = {:.4e}",
                eps / 2.0
            )));
        }
        let e_split = c2 * b_in.sqrt() + c1 * b_out;

        let lambda_inf = radius;
        let c4 = l_p
            * (n as f64).sqrt()
            * ((1.0 + x_inf) * n as f64 + (1.0 + lambda_inf) * p as f64 + k_log);
        let fl_dual = log2(c3 / b_out) - 1.0;
        let fl_primal = log2(4.0 * c4 * b_x / b_in) - 1.0;
        let fl_real = fl_dual.max(fl_primal).max(0.0);
        let fl = (fl_real.ceil() as u32).max(fl_data);
        if fl < grid_bits {
            // The radius must sit on the 2^-fl grid; retry on the coarser grid.
            // A coarser grid only grows the radius, so fl cannot drop again.
            grid_bits = fl;
            continue;
        }
        if fl > FxFormat::MAX_WL - 2 {
            return Err(DesignError::Infeasible(format!(
                "fraction length {fl} exceeds the supported word length"
            )));
        }
        let (c5, c6) = range_constants(probs, rho, fl, x_inf, lambda_inf)?;
        let wl = (log2(c5).max(log2(c6)) + fl as f64 + 2.0).ceil().max(fl as f64 + 2.0) as u32;
        if wl > FxFormat::MAX_WL {
            return Err(DesignError::Infeasible(format!(
                "word length {wl} exceeds the supported maximum {}",
                FxFormat::MAX_WL
            )));
        }
        let k_in_real = 4.0 * l_p * b_x * b_x * c2 * c2 / ((1.0 - alpha) * eps).powi(2) - 1.0;
        if !(k_in_real < 9.2e18) {
            return Err(DesignError::Infeasible(format!("K_in = {k_in_real:.3e} is unbounded")));
        }
        let k_in = (k_in_real.ceil() as u64).max(1);
        let diam = 2.0 * sqrt_p * radius;
        let phi1_max = (l / 2.0) * diam * diam + 0.5 * diam * diam;
        let k_out = ((phi1_max / eps).ceil() as u64).max(1);
        log::info!("design eps={eps}: Q{wl}.{fl}, K_in={k_in}, K_out={k_out}, radius={radius}");
        return Ok(DesignReport {
            eps,
            alpha,
            rho,
            l,
            l_p,
            n,
            p,
            b_x,
            x_inf,
            g,
            sigma_tilde_min,
            lambda_bound,
            dual_radius: radius,
            b_lambda,
            b_out,
            b_in,
            b_out_shrunk: shrunk,
            c1,
            c2,
            c3,
            c4,
            c5,
            c6,
            fl_dual,
            fl_primal,
            fl_data,
            fl,
            wl,
            k_in,
            k_out,
            phi1_max,
            sigma,
            theta,
            theta_source: theta_source.to_string(),
            e_total,
            e_split,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{BoxSet, EqualityConstraints, Term};
    use approx::assert_relative_eq;

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
    fn multiplier_bound_examples() {
        assert_relative_eq!(multiplier_bound(2.0, &DMatrix::identity(3, 3)).unwrap(), 2.0);
        let row = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert_relative_eq!(multiplier_bound(1.0, &row).unwrap(), 1.0 / 2f64.sqrt(), epsilon = 1e-12);
        assert_eq!(
            multiplier_bound(1.0, &DMatrix::zeros(2, 2)),
            Err(DesignError::ZeroMatrix)
        );
        let deficient = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        assert_relative_eq!(
            multiplier_bound(1.0, &deficient).unwrap(),
            1.0 / 2f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn g_examples() {
        let p = Problem::new(
            Objective::Quadratic {
                h: DMatrix::identity(3, 3),
                q: DVector::zeros(3),
            },
            EqualityConstraints::new(DMatrix::zeros(0, 3), DVector::zeros(0)).unwrap(),
            BoxSet::uniform(3, -1.0, 1.0).unwrap(),
        )
        .unwrap();
        let g = estimate_g(&p, 100, 1.5, 1, Exec::Sequential).unwrap();
        assert_relative_eq!(g, 1.5 * 3f64.sqrt(), epsilon = 1e-12);

        let k = 3;
        let terms = (0..k)
            .map(|i| {
                let mut r = DVector::zeros(k);
                r[i] = 1.0;
                Term::neg_log(r, 0.0, 0.1, 10.0)
            })
            .collect();
        let p = Problem::new(
            Objective::Separable { terms },
            EqualityConstraints::new(DMatrix::zeros(0, k), DVector::zeros(0)).unwrap(),
            BoxSet::uniform(k, 0.1, 10.0).unwrap(),
        )
        .unwrap();
        let g = estimate_g(&p, 10, 1.5, 2, Exec::Sequential).unwrap();
        assert_relative_eq!(g, 1.5 * 10.0 * 3f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn radius_examples() {
        assert_eq!(dual_radius(0.0, 4), 1.0);
        assert_eq!(dual_radius(3.0, 4), 6.0);
        assert_eq!(dual_radius(0.3, 2), 1.5);
        assert_eq!(dual_radius(0.26, 4), 1.3125);
    }

    #[test]
    fn split_examples() {
        let (b_out, _) = split_budget(0.1, 0.5, 10.0, 1.0);
        assert_relative_eq!(b_out, 0.0025, epsilon = 1e-15);
        let (_, b_in) = split_budget(0.1, 1.0 - 1e-300, 10.0, 1.0);
        assert_eq!(b_in, 0.0);
    }

    #[test]
    fn alpha_near_one_rejected() {
        let probs = [two_var()];
        let mut inp = DesignInput::new(&probs, 0.1);
        inp.samples = 100;
        inp.alpha = 1.0 - 1e-17;
        assert!(design(&inp).is_err());
    }

    #[test]
    fn sigma_identity_term() {
        let p = Problem::new(
            Objective::Quadratic {
                h: DMatrix::identity(2, 2),
                q: DVector::zeros(2),
            },
            EqualityConstraints::new(DMatrix::zeros(0, 2), DVector::zeros(0)).unwrap(),
            BoxSet::uniform(2, -1.0, 1.0).unwrap(),
        )
        .unwrap();
        let (s, t, _) = qg_sigma(&p, 2.0, None).unwrap();
        assert_relative_eq!(t, 1.0, epsilon = 1e-12);
        assert_relative_eq!(s, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn linear_term_outside_row_space_rejected() {
        let p = Problem::new(
            Objective::Separable {
                terms: vec![
                    Term::quadratic(1.0, DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), dv(&[0.0])),
                    Term::linear(dv(&[0.0, 1.0]), 0.0),
                ],
            },
            EqualityConstraints::new(DMatrix::zeros(0, 2), DVector::zeros(0)).unwrap(),
            BoxSet::uniform(2, -1.0, 1.0).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            qg_sigma(&p, 2.0, None),
            Err(DesignError::NotStronglyConvex(_))
        ));
    }

    #[test]
    fn brute_force_size_guard() {
        let a = DMatrix::from_row_slice(1, 7, &[1.0; 7]);
        assert!(matches!(
            hoffman_theta_bruteforce(&a, &box_rows(7)),
            Err(DesignError::TooLarge { .. })
        ));
    }

    #[test]
    fn design_two_var_is_consistent() {
        let probs = [two_var()];
        let mut inp = DesignInput::new(&probs, 0.1);
        inp.samples = 1000;
        let d = design(&inp).unwrap();
        assert!(d.wl > d.fl + 1);
        assert!(d.e_total <= d.eps / 2.0);
        assert!(d.format().is_exact(d.dual_radius));
        let mut inp2 = inp.clone();
        inp2.eps = 0.05;
        let d2 = design(&inp2).unwrap();
        assert!(d2.fl >= d.fl && d2.wl >= d.wl);
        assert!(d2.k_out >= 2 * d.k_out - 1 && d2.k_out <= 2 * d.k_out);
        assert!(d2.k_in >= 4 * d.k_in - 3 && d2.k_in <= 4 * d.k_in + 4);
    }
}
