mod common;

use common::*;
use fixalm_core::alm::{run_alm, verify, AlmConfig, DualBox};
use fixalm_core::designer::{design, DesignInput};
use fixalm_core::fxp::{FxError, FxFormat, OverflowAudit, OverflowPolicy};
use fixalm_core::inner::{
    write_trace_csv, Arithmetic, InnerSolver, Precomputed, SolverError, StopConfig, StopMode, StopReason,
};
use fixalm_core::problem::{BoxSet, EqualityConstraints, Objective, Problem};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn cap(k: u64) -> StopConfig {
    StopConfig {
        b_in: 1e-6,
        sigma: None,
        k_in_max: k,
        mode: StopMode::Cap,
    }
}

fn fixed(wl: u32, fl: u32, policy: OverflowPolicy) -> Arithmetic {
    Arithmetic::Fixed {
        fmt: FxFormat::new(wl, fl).unwrap(),
        policy,
    }
}

#[test]
fn fixed_mode_two_var_qp_lands_near_the_solution() {
    let p = two_var_qp();
    let cfg = AlmConfig::new(2.0, DualBox::new(2.0, 1).unwrap(), 400, fixed(32, 20, OverflowPolicy::Strict));
    let rep = run_alm(&p, &cfg, &cap(200)).unwrap();
    assert!((rep.lambda_last[0] + 0.5).abs() < 1e-3, "{:?}", rep.lambda_last);
    assert!((rep.objective_bar - 0.25).abs() < 1e-2);
    assert_eq!(rep.audit.saturations, 0);
    assert!(rep.audit.checked > 0);
    assert!(rep.dual_contained);
}

#[test]
fn undersized_word_length_overflows_in_strict_mode() {
    // Once x₂ reaches its bound 1.75 the pre-projection step is
    // 1.75 − 1.75/12 + 0.5 ≈ 2.1, outside Q1.6's range [−2, 2).
    let p = Problem::new(
        Objective::Quadratic {
            h: DMatrix::from_diagonal(&dv(&[1.0, 0.25])),
            q: dv(&[0.0, -1.5]),
        },
        EqualityConstraints::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), dv(&[0.5])).unwrap(),
        BoxSet::uniform(2, -1.75, 1.75).unwrap(),
    )
    .unwrap();
    let cfg = AlmConfig::new(2.0, DualBox::new(1.0, 1).unwrap(), 20, fixed(8, 6, OverflowPolicy::Strict));
    let err = run_alm(&p, &cfg, &cap(20)).unwrap_err();
    assert!(matches!(err, SolverError::Fx(FxError::Overflow { .. })), "{err:?}");

    let cfg = AlmConfig::new(2.0, DualBox::new(1.0, 1).unwrap(), 20, fixed(8, 6, OverflowPolicy::Saturate));
    let rep = run_alm(&p, &cfg, &cap(20)).unwrap();
    assert!(rep.audit.saturations > 0);

    let wide = AlmConfig::new(2.0, DualBox::new(1.0, 1).unwrap(), 20, fixed(10, 6, OverflowPolicy::Strict));
    assert_eq!(run_alm(&p, &wide, &cap(20)).unwrap().audit.saturations, 0);
}

#[test]
fn inexact_radius_is_rejected_in_fixed_mode() {
    let p = two_var_qp();
    let cfg = AlmConfig::new(2.0, DualBox::new(0.3, 1).unwrap(), 5, fixed(20, 8, OverflowPolicy::Strict));
    assert!(matches!(run_alm(&p, &cfg, &cap(5)), Err(SolverError::Config(_))));
}

#[test]
fn cap_mode_runs_exactly_k_in_iterations() {
    let p = random_qp(9, 4, 1);
    let pre = Precomputed::new(&p, 2.0, Arithmetic::Float, &mut OverflowAudit::default()).unwrap();
    let mut s = InnerSolver::new(&pre, 1.0);
    let r = s.solve_float(&DVector::zeros(1), &cap(37)).unwrap();
    assert_eq!(r.iters, 37);
    assert_eq!(r.stop, StopReason::Cap);
    assert!(p.bounds().contains(&r.x));
}

#[test]
fn trace_csv_has_one_row_per_iteration() {
    let p = two_var_qp();
    let pre = Precomputed::new(&p, 2.0, Arithmetic::Float, &mut OverflowAudit::default()).unwrap();
    let mut s = InnerSolver::new(&pre, 1.0).with_trace();
    s.solve_float(&DVector::zeros(1), &cap(5)).unwrap();
    let mut buf = Vec::new();
    write_trace_csv(s.trace().unwrap(), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("call,iter,value,residual,saturations\n"));
    assert!(text.lines().count() >= 6);
}

#[test]
fn designed_qp_run_meets_its_bounds() {
    let p = random_qp(21, 4, 2);
    let reference = qp_reference(&p);
    let d = design(&DesignInput::new(std::slice::from_ref(&p), 0.5)).unwrap();
    let mut cfg = d.alm_config(d.fixed(OverflowPolicy::Strict));
    cfg.measure_errors = true;
    let rep = run_alm(&p, &cfg, &d.stop_config()).unwrap();
    let v = verify(&rep, &p, reference.f, &reference.lambda);
    assert!(v.passed(), "{v:?}");
    assert!(v.worst_bound() <= 0.5);
    assert!(v.dual_box_admits);
    assert!(rep.eps_out_max <= rep.eps_out_bound);
    assert!(rep.eps_gp_max <= rep.eps_gp_bound);
}

#[test]
fn identical_configs_give_identical_reports() {
    let p = random_qp(3, 3, 1);
    let cfg = AlmConfig::new(2.0, DualBox::new(4.0, 1).unwrap(), 50, fixed(30, 18, OverflowPolicy::Strict));
    let a = serde_json::to_string(&run_alm(&p, &cfg, &cap(30)).unwrap()).unwrap();
    let b = serde_json::to_string(&run_alm(&p, &cfg, &cap(30)).unwrap()).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn multipliers_stay_in_the_dual_box(seed in 0u64..1000, radius_q in 1u32..16) {
        let p = random_qp(seed, 3, 2);
        let radius = radius_q as f64 / 8.0;
        let mut cfg = AlmConfig::new(2.0, DualBox::new(radius, 2).unwrap(), 30, Arithmetic::Float);
        cfg.record_iterates = true;
        let rep = run_alm(&p, &cfg, &cap(50)).unwrap();
        prop_assert!(rep.dual_contained);
        for k in 0..rep.lambda_history.len() {
            prop_assert!(rep.lambda(k).amax() <= radius);
        }
        for x in &rep.x_history {
            prop_assert!(p.bounds().contains(x));
        }
    }
}
