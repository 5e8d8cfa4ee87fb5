use proptest::prelude::*;
use qpost::theory::{
    h_lower_bound, laplace_gauss_integral, mills_ratio, rate_shift_infimum,
    self_concordance_bounds, RateFunction,
};

proptest! {
    #[test]
    fn mills_chain_holds(z in 0.0f64..40.0) {
        let m = mills_ratio(z).unwrap();
        prop_assert!(m.lower1 <= m.lower2 + 1e-12);
        prop_assert!(m.lower2 <= m.value + 1e-12);
        prop_assert!(m.value <= m.upper + 1e-12);
    }

    #[test]
    fn self_concordance_sandwich(x0 in -30.0f64..30.0, u in -15.0f64..15.0) {
        let b = self_concordance_bounds(x0, u);
        let tol = 1e-12 * b.upper.abs().max(1.0);
        prop_assert!(b.lower <= b.mid + tol && b.mid <= b.upper + tol);
    }

    #[test]
    fn h_dominates_rational_bound(x in 0.0f64..200.0) {
        let (h, lb) = h_lower_bound(x).unwrap();
        prop_assert!(h + 1e-12 >= lb);
    }

    #[test]
    fn laplace_gauss_monotone_and_bounded(a in 0.0f64..100.0, b in 0.01f64..50.0) {
        let v = laplace_gauss_integral(a, b).unwrap();
        prop_assert!(v <= 2.0 / b * (1.0 + 1e-12));
        prop_assert!(v >= 2.0 * b / (a + b * b) * (1.0 - 1e-12));
        prop_assert!(laplace_gauss_integral(a + 1.0, b).unwrap() <= v);
    }

    #[test]
    fn phi_is_the_crossing_point(tau in 0.1f64..1e3, b in 0.0f64..10.0, frac in 0.01f64..0.99) {
        let r = RateFunction::new(tau, b).unwrap();
        let a = if b > 0.0 { frac * tau / b } else { frac * tau };
        let phi = r.phi(a);
        prop_assert!(phi.is_finite());
        for z in [phi, 1.5 * phi, 10.0 * phi] {
            prop_assert!(r.eval(z) >= a * z * (1.0 - 1e-12));
        }
        prop_assert!(r.eval(0.99 * phi) < a * 0.99 * phi);
    }

    #[test]
    fn phi_infinite_beyond_slope_limit(tau in 0.1f64..1e3, b in 0.01f64..10.0, over in 1.0f64..10.0) {
        let r = RateFunction::new(tau, b).unwrap();
        prop_assert!(r.phi(over * tau / b).is_infinite());
    }

    #[test]
    fn shift_infimum_is_below_grid(tau in 0.1f64..100.0, b in 0.0f64..5.0, c in 0.0f64..50.0) {
        let r = RateFunction::new(tau, b).unwrap();
        let inf = rate_shift_infimum(&r, c).unwrap().exact_inf;
        for i in 0..200 {
            let x = i as f64 * 0.05;
            prop_assert!(inf <= r.eval(x) - c * x + 1e-9 * (1.0 + c * x));
        }
    }
}
