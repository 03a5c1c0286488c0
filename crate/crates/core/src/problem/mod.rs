//! Convex objective, linear equalities and a box: `min f(x) s.t. Ax = b, x ∈ X`.

mod file;

pub use file::{LoadError, ProblemFile, TermSpec};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::fxp::FxFormat;
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("box bounds invalid at coordinate {0} (need finite lo <= hi)")]
    InvalidBox(usize),
    #[error("objective is not convex: {0}")]
    NotConvex(String),
    #[error("log argument {0} is not positive")]
    Domain(f64),
    #[error("{what}[{index}] = {value} is not exactly representable in {tag}")]
    NotRepresentable {
        what: &'static str,
        index: usize,
        value: f64,
        tag: String,
    },
    #[error("invalid term: {0}")]
    InvalidTerm(String),
    #[error("penalty must be non-negative, got {0}")]
    Penalty(f64),
}

/// Compact box `{x : lo <= x <= hi}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    lo: DVector<f64>,
    hi: DVector<f64>,
}

impl BoxSet {
    pub fn new(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self, ProblemError> {
        if lo.len() != hi.len() {
            return Err(ProblemError::Dimension {
                what: "box",
                expected: lo.len(),
                got: hi.len(),
            });
        }
        for i in 0..lo.len() {
            if !(lo[i].is_finite() && hi[i].is_finite() && lo[i] <= hi[i]) {
                return Err(ProblemError::InvalidBox(i));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn uniform(n: usize, lo: f64, hi: f64) -> Result<Self, ProblemError> {
        Self::new(DVector::from_element(n, lo), DVector::from_element(n, hi))
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &DVector<f64> {
        &self.lo
    }

    pub fn hi(&self) -> &DVector<f64> {
        &self.hi
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(self.hi.iter()))
            .all(|(v, (l, h))| v >= l && v <= h)
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            x.len(),
            x.iter()
                .zip(self.lo.iter().zip(self.hi.iter()))
                .map(|(v, (l, h))| v.clamp(*l, *h)),
        )
    }

    /// Euclidean diameter `B_x`.
    pub fn diameter(&self) -> f64 {
        (&self.hi - &self.lo).norm()
    }

    /// `max_{x∈X} ‖x‖_∞`.
    pub fn inf_radius(&self) -> f64 {
        self.lo
            .iter()
            .chain(self.hi.iter())
            .fold(0.0f64, |a, v| a.max(v.abs()))
    }

    pub fn midpoint(&self) -> DVector<f64> {
        (&self.lo + &self.hi) * 0.5
    }

    /// Corner selected by the bits of `mask` (bit i set = upper bound).
    pub fn corner(&self, mask: u64) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|i| {
                if (mask >> i) & 1 == 1 {
                    self.hi[i]
                } else {
                    self.lo[i]
                }
            }),
        )
    }

    /// Range of `aᵀx − offset` over the box.
    pub fn image(&self, a: &DVector<f64>, offset: f64) -> (f64, f64) {
        let mut lo = -offset;
        let mut hi = -offset;
        for i in 0..a.len() {
            let (p, q) = (a[i] * self.lo[i], a[i] * self.hi[i]);
            lo += p.min(q);
            hi += p.max(q);
        }
        (lo, hi)
    }
}

/// `Ax = b`.
#[derive(Debug, Clone, PartialEq)]
pub struct EqualityConstraints {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl EqualityConstraints {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, ProblemError> {
        if a.nrows() != b.len() {
            return Err(ProblemError::Dimension {
                what: "b",
                expected: a.nrows(),
                got: b.len(),
            });
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }
}

/// Scalar function `h` applied to `Rx − offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TermKind {
    /// `h(y) = −ln y` on a scalar; `[lo, hi]` must contain the box image.
    NegLog { lo: f64, hi: f64 },
    /// `h(y) = (modulus/2)‖y‖²`.
    Quadratic { modulus: f64 },
    /// `h(y) = y` on a scalar.
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub kind: TermKind,
    pub rows: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl Term {
    pub fn neg_log(row: DVector<f64>, offset: f64, lo: f64, hi: f64) -> Self {
        Self {
            kind: TermKind::NegLog { lo, hi },
            rows: DMatrix::from_row_slice(1, row.len(), row.as_slice()),
            offset: DVector::from_element(1, offset),
        }
    }

    pub fn quadratic(modulus: f64, rows: DMatrix<f64>, offset: DVector<f64>) -> Self {
        Self {
            kind: TermKind::Quadratic { modulus },
            rows,
            offset,
        }
    }

    pub fn linear(row: DVector<f64>, offset: f64) -> Self {
        Self {
            kind: TermKind::Linear,
            rows: DMatrix::from_row_slice(1, row.len(), row.as_slice()),
            offset: DVector::from_element(1, offset),
        }
    }

    fn arg(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.rows * x - &self.offset
    }

    fn row(&self) -> DVector<f64> {
        self.rows.row(0).transpose()
    }

    /// Strong-convexity modulus of `h` (0 for linear pieces).
    pub fn modulus(&self) -> f64 {
        match self.kind {
            TermKind::NegLog { hi, .. } => 1.0 / (hi * hi),
            TermKind::Quadratic { modulus } => modulus,
            TermKind::Linear => 0.0,
        }
    }

    /// Upper bound on `h''` over the declared domain.
    pub fn curvature_bound(&self) -> f64 {
        match self.kind {
            TermKind::NegLog { lo, .. } => 1.0 / (lo * lo),
            TermKind::Quadratic { modulus } => modulus,
            TermKind::Linear => 0.0,
        }
    }

    fn value(&self, x: &DVector<f64>) -> Result<f64, ProblemError> {
        let y = self.arg(x);
        Ok(match self.kind {
            TermKind::NegLog { .. } => {
                if y[0] <= 0.0 {
                    return Err(ProblemError::Domain(y[0]));
                }
                -y[0].ln()
            }
            TermKind::Quadratic { modulus } => 0.5 * modulus * y.norm_squared(),
            TermKind::Linear => y[0],
        })
    }

    fn add_gradient(&self, x: &DVector<f64>, out: &mut DVector<f64>) -> Result<(), ProblemError> {
        let y = self.arg(x);
        match self.kind {
            TermKind::NegLog { .. } => {
                if y[0] <= 0.0 {
                    return Err(ProblemError::Domain(y[0]));
                }
                out.axpy(-1.0 / y[0], &self.row(), 1.0);
            }
            TermKind::Quadratic { modulus } => {
                out.gemv_tr(modulus, &self.rows, &y, 1.0);
            }
            TermKind::Linear => out.axpy(1.0, &self.row(), 1.0),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// `½xᵀHx + qᵀx`
    Quadratic { h: DMatrix<f64>, q: DVector<f64> },
    /// `Σ h_i(R_i x − c_i)`
    Separable { terms: Vec<Term> },
}

/// A `−ln(aᵀx − offset)` piece kept out of the quadratic part.
#[derive(Debug, Clone, PartialEq)]
pub struct LogPiece {
    pub row: DVector<f64>,
    pub offset: f64,
    pub curvature: f64,
}

impl LogPiece {
    pub fn derivative(&self, x: &DVector<f64>) -> f64 {
        -1.0 / (self.row.dot(x) - self.offset)
    }
}

/// `f(x) = ½xᵀQx + qᵀx + Σ −ln(aᵢᵀx − cᵢ) + const`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothSplit {
    pub quad: DMatrix<f64>,
    pub lin: DVector<f64>,
    pub logs: Vec<LogPiece>,
}

/// Problem data: objective, equalities and box.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    objective: Objective,
    constraints: EqualityConstraints,
    bounds: BoxSet,
    meta: serde_json::Value,
}

impl Problem {
    pub fn new(
        objective: Objective,
        constraints: EqualityConstraints,
        bounds: BoxSet,
    ) -> Result<Self, ProblemError> {
        let n = bounds.dim();
        if constraints.a.ncols() != n {
            return Err(ProblemError::Dimension {
                what: "A columns",
                expected: n,
                got: constraints.a.ncols(),
            });
        }
        match &objective {
            Objective::Quadratic { h, q } => {
                if h.nrows() != n || h.ncols() != n || q.len() != n {
                    return Err(ProblemError::Dimension {
                        what: "H/q",
                        expected: n,
                        got: h.nrows(),
                    });
                }
                if (h - h.transpose()).amax() > 1e-12 * h.amax().max(1.0) {
                    return Err(ProblemError::NotConvex("H is not symmetric".into()));
                }
                let (lo, _) = linalg::sym_eig_extremes(h);
                if lo < -1e-10 * h.amax().max(1.0) {
                    return Err(ProblemError::NotConvex(format!(
                        "H has eigenvalue {lo:.3e}"
                    )));
                }
            }
            Objective::Separable { terms } => {
                for (k, t) in terms.iter().enumerate() {
                    if t.rows.ncols() != n || t.rows.nrows() != t.offset.len() {
                        return Err(ProblemError::Dimension {
                            what: "term rows",
                            expected: n,
                            got: t.rows.ncols(),
                        });
                    }
                    match t.kind {
                        TermKind::NegLog { lo, hi } => {
                            if t.rows.nrows() != 1 {
                                return Err(ProblemError::InvalidTerm(format!(
                                    "term {k}: neglog acts on one row"
                                )));
                            }
                            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                                return Err(ProblemError::InvalidTerm(format!(
                                    "term {k}: neglog domain [{lo}, {hi}] invalid"
                                )));
                            }
                            let (ilo, ihi) = bounds.image(&t.row(), t.offset[0]);
                            if ilo < lo || ihi > hi {
                                return Err(ProblemError::InvalidTerm(format!(
                                    "term {k}: box image [{ilo}, {ihi}] leaves domain [{lo}, {hi}]"
                                )));
                            }
                        }
                        TermKind::Quadratic { modulus } => {
                            if !(modulus >= 0.0 && modulus.is_finite()) {
                                return Err(ProblemError::NotConvex(format!(
                                    "term {k}: modulus {modulus}"
                                )));
                            }
                        }
                        TermKind::Linear => {
                            if t.rows.nrows() != 1 {
                                return Err(ProblemError::InvalidTerm(format!(
                                    "term {k}: linear acts on one row"
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(Self {
            objective,
            constraints,
            bounds,
            meta: serde_json::Value::Null,
        })
    }

    pub fn with_meta(mut self, meta: serde_json::Value) -> Self {
        self.meta = meta;
        self
    }

    pub fn meta(&self) -> &serde_json::Value {
        &self.meta
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn constraints(&self) -> &EqualityConstraints {
        &self.constraints
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.constraints.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.constraints.b
    }

    pub fn bounds(&self) -> &BoxSet {
        &self.bounds
    }

    pub fn n(&self) -> usize {
        self.bounds.dim()
    }

    pub fn p(&self) -> usize {
        self.constraints.rows()
    }

    pub fn eval_objective(&self, x: &DVector<f64>) -> Result<f64, ProblemError> {
        match &self.objective {
            Objective::Quadratic { h, q } => Ok(0.5 * x.dot(&(h * x)) + q.dot(x)),
            Objective::Separable { terms } => {
                terms.iter().map(|t| t.value(x)).sum::<Result<f64, _>>()
            }
        }
    }

    /// Gradient of `f`. Every supported term is differentiable on its
    /// domain, so this is the unique (hence minimum-norm) subgradient.
    pub fn eval_subgradient(&self, x: &DVector<f64>) -> Result<DVector<f64>, ProblemError> {
        match &self.objective {
            Objective::Quadratic { h, q } => Ok(h * x + q),
            Objective::Separable { terms } => {
                let mut g = DVector::zeros(self.n());
                for t in terms {
                    t.add_gradient(x, &mut g)?;
                }
                Ok(g)
            }
        }
    }

    /// `r(x) = Ax − b`.
    pub fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        self.a() * x - self.b()
    }

    /// `L_ρ(x; λ) = f(x) + ⟨Ax − b, λ⟩ + (ρ/2)‖Ax − b‖²`; `ρ = 0` gives the plain Lagrangian.
    pub fn eval_al(
        &self,
        x: &DVector<f64>,
        lambda: &DVector<f64>,
        rho: f64,
    ) -> Result<f64, ProblemError> {
        if rho < 0.0 {
            return Err(ProblemError::Penalty(rho));
        }
        let r = self.residual(x);
        Ok(self.eval_objective(x)? + r.dot(lambda) + 0.5 * rho * r.norm_squared())
    }

    pub fn eval_al_gradient(
        &self,
        x: &DVector<f64>,
        lambda: &DVector<f64>,
        rho: f64,
    ) -> Result<DVector<f64>, ProblemError> {
        if rho < 0.0 {
            return Err(ProblemError::Penalty(rho));
        }
        let r = self.residual(x);
        let mut g = self.eval_subgradient(x)?;
        g.gemv_tr(1.0, self.a(), &(lambda + &r * rho), 1.0);
        Ok(g)
    }

    /// Split into a quadratic part plus log pieces (constants dropped).
    pub fn smooth_split(&self) -> SmoothSplit {
        let n = self.n();
        match &self.objective {
            Objective::Quadratic { h, q } => SmoothSplit {
                quad: h.clone(),
                lin: q.clone(),
                logs: Vec::new(),
            },
            Objective::Separable { terms } => {
                let mut quad = DMatrix::zeros(n, n);
                let mut lin = DVector::zeros(n);
                let mut logs = Vec::new();
                for t in terms {
                    match t.kind {
                        TermKind::NegLog { lo, .. } => logs.push(LogPiece {
                            row: t.row(),
                            offset: t.offset[0],
                            curvature: 1.0 / (lo * lo),
                        }),
                        TermKind::Quadratic { modulus } => {
                            quad += t.rows.transpose() * &t.rows * modulus;
                            lin -= t.rows.transpose() * &t.offset * modulus;
                        }
                        TermKind::Linear => lin += t.row(),
                    }
                }
                SmoothSplit { quad, lin, logs }
            }
        }
    }

    /// Upper bound on the Lipschitz constant of `∇ₓL_ρ` over the box:
    /// `λ_max(Q + ρAᵀA + Σ κᵢ aᵢaᵢᵀ)` with `κᵢ` the log-curvature bound.
    pub fn lipschitz_lp(&self, rho: f64) -> f64 {
        let split = self.smooth_split();
        let mut m = split.quad + self.a().transpose() * self.a() * rho;
        for piece in &split.logs {
            m += &piece.row * piece.row.transpose() * piece.curvature;
        }
        linalg::sym_eig_extremes(&m).1.max(0.0)
    }

    /// Strong-convexity moduli of the objective pieces.
    pub fn qg_moduli(&self) -> Vec<f64> {
        match &self.objective {
            Objective::Quadratic { .. } => vec![1.0],
            Objective::Separable { terms } => terms.iter().map(Term::modulus).collect(),
        }
    }

    /// Checks that the constraint and box data sit on the `fmt` grid.
    pub fn check_representable(&self, fmt: FxFormat) -> Result<(), ProblemError> {
        let groups: [(&'static str, Vec<f64>); 4] = [
            ("A", linalg::row_major(self.a())),
            ("b", self.b().iter().cloned().collect()),
            ("box.lo", self.bounds.lo.iter().cloned().collect()),
            ("box.hi", self.bounds.hi.iter().cloned().collect()),
        ];
        for (what, vals) in groups {
            if let Some((index, &value)) =
                vals.iter().enumerate().find(|(_, v)| !fmt.is_exact(**v))
            {
                return Err(ProblemError::NotRepresentable {
                    what,
                    index,
                    value,
                    tag: fmt.tag(),
                });
            }
        }
        Ok(())
    }
}

/// The augmented Lagrangian of a problem at a fixed penalty.
#[derive(Debug, Clone, Copy)]
pub struct AugmentedLagrangian<'a> {
    problem: &'a Problem,
    rho: f64,
}

impl<'a> AugmentedLagrangian<'a> {
    pub fn new(problem: &'a Problem, rho: f64) -> Result<Self, ProblemError> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(ProblemError::Penalty(rho));
        }
        Ok(Self { problem, rho })
    }

    pub fn problem(&self) -> &'a Problem {
        self.problem
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `L_Φ = 1/ρ`, Lipschitz constant of the dual gradient.
    pub fn dual_lipschitz(&self) -> f64 {
        1.0 / self.rho
    }

    /// `L = 2/ρ`, the dual step constant.
    pub fn dual_step_constant(&self) -> f64 {
        2.0 / self.rho
    }

    pub fn value(&self, x: &DVector<f64>, lambda: &DVector<f64>) -> Result<f64, ProblemError> {
        self.problem.eval_al(x, lambda, self.rho)
    }

    pub fn gradient(
        &self,
        x: &DVector<f64>,
        lambda: &DVector<f64>,
    ) -> Result<DVector<f64>, ProblemError> {
        self.problem.eval_al_gradient(x, lambda, self.rho)
    }

    pub fn lipschitz(&self) -> f64 {
        self.problem.lipschitz_lp(self.rho)
    }
}
