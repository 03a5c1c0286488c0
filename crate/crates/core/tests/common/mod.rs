//! Shared fixtures and independent reference solvers for the integration tests.
#![allow(dead_code)]

use fixalm_core::problem::{BoxSet, EqualityConstraints, Objective, Problem};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(v)
}

/// `min ½‖x‖² s.t. x₁ + x₂ = 1, x ∈ [−1, 1]²`; KKT by hand gives
/// `x* = (½, ½)`, `λ* = −½`, `f* = ¼`.
pub fn two_var_qp() -> Problem {
    Problem::new(
        Objective::Quadratic {
            h: DMatrix::identity(2, 2),
            q: DVector::zeros(2),
        },
        EqualityConstraints::new(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), dv(&[1.0])).unwrap(),
        BoxSet::uniform(2, -1.0, 1.0).unwrap(),
    )
    .unwrap()
}

fn grid(rng: &mut ChaCha8Rng, lo: i32, hi: i32, denom: f64) -> f64 {
    rng.random_range(lo..=hi) as f64 / denom
}

/// Random strongly convex QP on `[−1, 1]^n` with `p` equality rows.
/// `A` and `b` lie on dyadic grids so they are exactly representable, and
/// `b = A x₀` for an interior grid point `x₀`.
pub fn random_qp(seed: u64, n: usize, p: usize) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = m.transpose() * &m / n as f64 + DMatrix::identity(n, n) * 0.5;
    let q = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let a = loop {
        let a = DMatrix::from_fn(p, n, |_, _| grid(&mut rng, -4, 4, 4.0));
        if p == 0 || a.clone().svd(false, false).singular_values.min() > 0.1 {
            break a;
        }
    };
    let x0 = DVector::from_fn(n, |_, _| grid(&mut rng, -4, 4, 8.0));
    let b = &a * x0;
    Problem::new(
        Objective::Quadratic { h, q },
        EqualityConstraints::new(a, b).unwrap(),
        BoxSet::uniform(n, -1.0, 1.0).unwrap(),
    )
    .unwrap()
}

pub fn quadratic_data(p: &Problem) -> (DMatrix<f64>, DVector<f64>) {
    match p.objective() {
        Objective::Quadratic { h, q } => (h.clone(), q.clone()),
        _ => panic!("not a quadratic objective"),
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub lambda: DVector<f64>,
    pub f: f64,
}

/// Exact minimizer of `½xᵀHx + cᵀx s.t. Ax = b, lo ≤ x ≤ hi` by enumerating
/// every active set and checking the KKT conditions. Only for small `n`.
pub fn box_eq_qp_exact(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> Option<QpSolution> {
    let n = c.len();
    let p = b.len();
    assert!(n <= 8);
    let tol = 1e-10;
    let mut best: Option<QpSolution> = None;
    for code in 0..3usize.pow(n as u32) {
        // 0 free, 1 at lo, 2 at hi
        let mut state = vec![0u8; n];
        let mut c_ = code;
        for s in state.iter_mut() {
            *s = (c_ % 3) as u8;
            c_ /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 0).collect();
        let mut x = DVector::zeros(n);
        for i in 0..n {
            match state[i] {
                1 => x[i] = lo[i],
                2 => x[i] = hi[i],
                _ => {}
            }
        }
        let nf = free.len();
        let dim = nf + p;
        let mut kkt = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        let hx_fixed = h * &x;
        let ax_fixed = a * &x;
        for (r, &i) in free.iter().enumerate() {
            for (s, &j) in free.iter().enumerate() {
                kkt[(r, s)] = h[(i, j)];
            }
            for k in 0..p {
                kkt[(r, nf + k)] = a[(k, i)];
                kkt[(nf + k, r)] = a[(k, i)];
            }
            rhs[r] = -c[i] - hx_fixed[i];
        }
        for k in 0..p {
            rhs[nf + k] = b[k] - ax_fixed[k];
        }
        let sol = if dim == 0 {
            DVector::zeros(0)
        } else {
            let lu = kkt.clone().lu();
            match lu.solve(&rhs) {
                Some(s) if (&kkt * &s - &rhs).norm() <= 1e-9 * (1.0 + rhs.norm()) => s,
                _ => continue,
            }
        };
        for (r, &i) in free.iter().enumerate() {
            x[i] = sol[r];
        }
        let lambda = DVector::from_fn(p, |k, _| sol[nf + k]);
        if (0..n).any(|i| x[i] < lo[i] - tol || x[i] > hi[i] + tol) {
            continue;
        }
        if (a * &x - b).norm() > 1e-9 {
            continue;
        }
        let g = h * &x + c + a.transpose() * &lambda;
        let ok = (0..n).all(|i| match state[i] {
            1 => g[i] >= -1e-9,
            2 => g[i] <= 1e-9,
            _ => true,
        });
        if !ok {
            continue;
        }
        let f = 0.5 * x.dot(&(h * &x)) + c.dot(&x);
        if best.as_ref().is_none_or(|bst| f < bst.f) {
            best = Some(QpSolution { x, lambda, f });
        }
    }
    best
}

/// Reference solution of a quadratic `Problem`.
pub fn qp_reference(p: &Problem) -> QpSolution {
    let (h, q) = quadratic_data(p);
    box_eq_qp_exact(&h, &q, p.a(), p.b(), p.bounds().lo(), p.bounds().hi()).expect("qp has no solution")
}

/// `Φ_ρ(λ) = min_{x∈box} L_ρ(x; λ)` for a quadratic problem, exactly.
pub fn dual_function_exact(p: &Problem, rho: f64, lambda: &DVector<f64>) -> (f64, DVector<f64>) {
    let (h, q) = quadratic_data(p);
    let (a, b) = (p.a(), p.b());
    let hs = &h + a.transpose() * a * rho;
    let cs = &q + a.transpose() * lambda - a.transpose() * b * rho;
    let konst = -lambda.dot(b) + 0.5 * rho * b.norm_squared();
    let none = DMatrix::zeros(0, h.ncols());
    let s = box_eq_qp_exact(&hs, &cs, &none, &DVector::zeros(0), p.bounds().lo(), p.bounds().hi())
        .expect("box qp always solvable");
    (s.f + konst, s.x)
}

/// Least-squares slope of `y` against `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
