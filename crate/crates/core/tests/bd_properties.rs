use ebda_core::error::Error;
use ebda_core::metrics::{bd_psnr, bd_rate, RdCurve, RdPoint};
use proptest::prelude::*;

fn curve(points: &[(f64, f64)]) -> RdCurve {
    RdCurve::new(points.iter().map(|&(r, q)| RdPoint::new(r, q)).collect()).unwrap()
}

/// Four-point curves: rates spread over roughly a decade, PSNR rising.
fn rd_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
    (
        50.0f64..500.0,
        prop::collection::vec(1.2f64..2.5, 3),
        28.0f64..36.0,
        prop::collection::vec(0.8f64..3.0, 3),
    )
        .prop_map(|(r0, rs, q0, qs)| {
            let mut r = r0;
            let mut q = q0;
            let mut out = vec![(r, q)];
            for (dr, dq) in rs.into_iter().zip(qs) {
                r *= dr;
                q += dq;
                out.push((r, q));
            }
            out
        })
}

/// Integral of the Lagrange interpolant through four points, exact.
fn lagrange_integral(xs: &[f64; 4], ys: &[f64; 4], lo: f64, hi: f64) -> f64 {
    // Expand each basis polynomial into monomial coefficients.
    let mut coeffs = [0.0f64; 4];
    for i in 0..4 {
        let mut poly = vec![1.0f64];
        let mut denom = 1.0;
        for j in 0..4 {
            if i == j {
                continue;
            }
            let mut next = vec![0.0; poly.len() + 1];
            for (k, c) in poly.iter().enumerate() {
                next[k] -= c * xs[j];
                next[k + 1] += c;
            }
            poly = next;
            denom *= xs[i] - xs[j];
        }
        for k in 0..4 {
            coeffs[k] += ys[i] * poly[k] / denom;
        }
    }
    let anti = |x: f64| (0..4).map(|k| coeffs[k] * x.powi(k as i32 + 1) / (k as f64 + 1.0)).sum::<f64>();
    anti(hi) - anti(lo)
}

fn bd_rate_oracle(a: &[(f64, f64)], t: &[(f64, f64)]) -> f64 {
    let arr = |c: &[(f64, f64)], f: fn(&(f64, f64)) -> f64| -> [f64; 4] {
        [f(&c[0]), f(&c[1]), f(&c[2]), f(&c[3])]
    };
    let (aq, ar) = (arr(a, |p| p.1), arr(a, |p| p.0.log10()));
    let (tq, tr) = (arr(t, |p| p.1), arr(t, |p| p.0.log10()));
    let lo = aq[0].max(tq[0]);
    let hi = aq[3].min(tq[3]);
    let d = (lagrange_integral(&tq, &tr, lo, hi) - lagrange_integral(&aq, &ar, lo, hi)) / (hi - lo);
    (10f64.powf(d) - 1.0) * 100.0
}

#[test]
fn bd_rate_agrees_with_lagrange_oracle() {
    let a = [(100.0, 30.0), (180.0, 32.4), (330.0, 34.9), (600.0, 37.1)];
    let t = [(90.0, 30.2), (170.0, 32.8), (300.0, 35.0), (560.0, 37.4)];
    let got = bd_rate(&curve(&a), &curve(&t)).unwrap();
    let want = bd_rate_oracle(&a, &t);
    assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    assert!(got < 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn identical_curves_have_no_delta(a in rd_strategy()) {
        let c = curve(&a);
        prop_assert!(bd_rate(&c, &c).unwrap().abs() < 1e-9);
        prop_assert!(bd_psnr(&c, &c).unwrap().abs() < 1e-9);
    }

    #[test]
    fn scaling_rates_scales_bd_rate(a in rd_strategy(), k in 1.05f64..3.0) {
        let t: Vec<_> = a.iter().map(|&(r, q)| (r * k, q)).collect();
        let got = bd_rate(&curve(&a), &curve(&t)).unwrap();
        prop_assert!((got - (k - 1.0) * 100.0).abs() < 1e-6, "{} vs {}", got, (k - 1.0) * 100.0);
    }

    #[test]
    fn shifting_quality_shifts_bd_psnr(a in rd_strategy(), dq in -2.0f64..2.0) {
        let t: Vec<_> = a.iter().map(|&(r, q)| (r, q + dq)).collect();
        let got = bd_psnr(&curve(&a), &curve(&t)).unwrap();
        prop_assert!((got - dq).abs() < 1e-9);
    }

    #[test]
    fn bd_rate_is_antisymmetric_in_log_domain(a in rd_strategy(), b in rd_strategy()) {
        let (ca, cb) = (curve(&a), curve(&b));
        match (bd_rate(&ca, &cb), bd_rate(&cb, &ca)) {
            (Ok(ab), Ok(ba)) => {
                let lhs = (1.0 + ab / 100.0).log10();
                let rhs = -(1.0 + ba / 100.0).log10();
                prop_assert!((lhs - rhs).abs() < 1e-9);
            }
            (Err(Error::NonOverlappingCurves(_)), Err(Error::NonOverlappingCurves(_))) => {}
            other => prop_assert!(false, "inconsistent results {:?}", other),
        }
        match (bd_psnr(&ca, &cb), bd_psnr(&cb, &ca)) {
            (Ok(ab), Ok(ba)) => prop_assert!((ab + ba).abs() < 1e-9),
            (Err(Error::NonOverlappingCurves(_)), Err(Error::NonOverlappingCurves(_))) => {}
            other => prop_assert!(false, "inconsistent results {:?}", other),
        }
    }

    #[test]
    fn point_order_does_not_matter(a in rd_strategy(), b in rd_strategy()) {
        let mut ra = a.clone();
        ra.reverse();
        let x = bd_psnr(&curve(&a), &curve(&b));
        let y = bd_psnr(&curve(&ra), &curve(&b));
        match (x, y) {
            (Ok(x), Ok(y)) => prop_assert_eq!(x, y),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false),
        }
    }
}

#[test]
fn curves_need_four_monotone_points() {
    let pts = |v: &[(f64, f64)]| v.iter().map(|&(r, q)| RdPoint::new(r, q)).collect::<Vec<_>>();
    assert!(matches!(
        RdCurve::new(pts(&[(1.0, 30.0), (2.0, 31.0), (3.0, 32.0)])),
        Err(Error::Parameter(_))
    ));
    assert!(matches!(
        RdCurve::new(pts(&[(1.0, 30.0), (2.0, 29.0), (3.0, 32.0), (4.0, 33.0)])),
        Err(Error::NonMonotoneCurve(_))
    ));
}
