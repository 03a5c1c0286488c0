use fixalm_core::fxp::{
    fx_add, fx_matvec, fx_project_box, quantize, FxError, FxFormat, FxMatrix, FxVector, OverflowAudit,
    OverflowPolicy,
};
use proptest::prelude::*;

fn fmt_strategy() -> impl Strategy<Value = FxFormat> {
    (0u32..30, 2u32..16).prop_map(|(fl, int)| FxFormat::new(fl + int + 1, fl).unwrap())
}

proptest! {
    #[test]
    fn quantize_within_half_lsb(fmt in fmt_strategy(), u in 0.0f64..1.0) {
        let x = fmt.min_real() + u * (fmt.max_real() - fmt.min_real());
        let q = quantize(x, fmt, OverflowPolicy::Strict, &mut OverflowAudit::default()).unwrap();
        prop_assert!((x - q.to_real()).abs() <= fmt.lsb() / 2.0);
    }

    #[test]
    fn quantize_is_idempotent(fmt in fmt_strategy(), u in 0.0f64..1.0) {
        let x = fmt.min_real() + u * (fmt.max_real() - fmt.min_real());
        let mut audit = OverflowAudit::default();
        let q = quantize(x, fmt, OverflowPolicy::Strict, &mut audit).unwrap();
        let qq = quantize(q.to_real(), fmt, OverflowPolicy::Strict, &mut audit).unwrap();
        prop_assert_eq!(q, qq);
    }

    #[test]
    fn saturate_clamps_and_strict_signals(fmt in fmt_strategy(), scale in 1.5f64..100.0) {
        let x = fmt.max_real() * scale + 1.0;
        let mut audit = OverflowAudit::default();
        let q = quantize(x, fmt, OverflowPolicy::Saturate, &mut audit).unwrap();
        prop_assert_eq!(q.raw(), fmt.raw_max());
        prop_assert_eq!(audit.saturations, 1);
        let strict = quantize(-x, fmt, OverflowPolicy::Strict, &mut OverflowAudit::default());
        let is_overflow = matches!(strict, Err(FxError::Overflow { .. }));
        prop_assert!(is_overflow);
    }

    #[test]
    fn addition_is_exact_in_range(fmt in fmt_strategy(), a in -0.4f64..0.4, b in -0.4f64..0.4) {
        let mut audit = OverflowAudit::default();
        let qa = quantize(a * fmt.max_real(), fmt, OverflowPolicy::Strict, &mut audit).unwrap();
        let qb = quantize(b * fmt.max_real(), fmt, OverflowPolicy::Strict, &mut audit).unwrap();
        let s = fx_add(qa, qb, OverflowPolicy::Strict, &mut audit).unwrap();
        prop_assert_eq!(s.to_real(), qa.to_real() + qb.to_real());
    }

    #[test]
    fn projection_is_idempotent(
        v in prop::collection::vec(-10.0f64..10.0, 1..8),
        w in prop::collection::vec(0.0f64..5.0, 8),
    ) {
        let fmt = FxFormat::new(24, 10).unwrap();
        let mut audit = OverflowAudit::default();
        let n = v.len();
        let lo: Vec<f64> = w[..n].iter().map(|x| -x).collect();
        let hi: Vec<f64> = w[..n].to_vec();
        let fv = FxVector::quantize(&v, fmt, OverflowPolicy::Strict, &mut audit).unwrap();
        let fl = FxVector::quantize(&lo, fmt, OverflowPolicy::Strict, &mut audit).unwrap();
        let fh = FxVector::quantize(&hi, fmt, OverflowPolicy::Strict, &mut audit).unwrap();
        let once = fx_project_box(&fv, &fl, &fh).unwrap();
        let twice = fx_project_box(&once, &fl, &fh).unwrap();
        prop_assert_eq!(&once, &twice);
        for i in 0..n {
            prop_assert!(fl.raw()[i] <= once.raw()[i] && once.raw()[i] <= fh.raw()[i]);
        }
    }

    #[test]
    fn matvec_error_bound(
        m in 1usize..12,
        n in 1usize..12,
        fl in 4u32..20,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let fmt = FxFormat::new(fl + 10, fl).unwrap();
        let mut audit = OverflowAudit::default();
        let data: Vec<f64> = (0..m * n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let vdata: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mat = FxMatrix::quantize(m, n, &data, fmt, OverflowPolicy::Strict, &mut audit).unwrap();
        let v = FxVector::quantize(&vdata, fmt, OverflowPolicy::Strict, &mut audit).unwrap();
        let out = fx_matvec(&mat, &v, fmt, OverflowPolicy::Strict, &mut audit).unwrap();
        let mr = mat.to_real();
        let vr = v.to_real();
        let err2: f64 = (0..m)
            .map(|i| {
                let exact: f64 = (0..n).map(|j| mr[i * n + j] * vr[j]).sum();
                (exact - out.to_real()[i]).powi(2)
            })
            .sum();
        // One rounding per output entry.
        prop_assert!(err2.sqrt() <= (m as f64).sqrt() * fmt.lsb() / 2.0 + 1e-15);
    }
}

#[test]
fn format_limits() {
    assert!(FxFormat::new(63, 10).is_err());
    assert!(FxFormat::new(10, 10).is_err());
    let f = FxFormat::new(8, 4).unwrap();
    assert_eq!(f.max_real(), 127.0 / 16.0);
    assert_eq!(f.min_real(), -8.0);
}

#[test]
fn half_way_rounds_to_even() {
    let f = FxFormat::new(16, 2).unwrap();
    let mut a = OverflowAudit::default();
    assert_eq!(quantize(0.125, f, OverflowPolicy::Strict, &mut a).unwrap().raw(), 0);
    assert_eq!(quantize(0.375, f, OverflowPolicy::Strict, &mut a).unwrap().raw(), 2);
    assert_eq!(quantize(-0.375, f, OverflowPolicy::Strict, &mut a).unwrap().raw(), -2);
}
