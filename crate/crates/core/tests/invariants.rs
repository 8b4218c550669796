use proptest::prelude::*;
use singular_bsde::backward::{exact_flow_step, implicit_driver_step};
use singular_bsde::model::{Driver, Eta};
use singular_bsde::oracle::{solve_vn, solve_vstar, theta, truncated_profile, truncated_profile_eta};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn theta_linearizes_the_profile(q in 1.2f64..6.0, k in 0.1f64..1e3, frac in 0.0f64..1.0) {
        let horizon = 1.0;
        let t = frac * horizon;
        let y = truncated_profile(q, horizon, k, t).unwrap();
        let lhs = theta(y, q, 1.0).unwrap() - theta(k, q, 1.0).unwrap();
        prop_assert!((lhs - (horizon - t)).abs() <= 1e-10 * (1.0 + theta(k, q, 1.0).unwrap()));
    }

    #[test]
    fn profile_increases_in_k(q in 1.2f64..6.0, k in 0.1f64..100.0, eta in 0.2f64..5.0, t in 0.0f64..0.99) {
        let lo = truncated_profile_eta(q, eta, 1.0, k, t).unwrap();
        let hi = truncated_profile_eta(q, eta, 1.0, 2.0 * k, t).unwrap();
        prop_assert!(lo < hi && hi <= 2.0 * k);
    }

    #[test]
    fn vn_is_below_vstar(q in 1.5f64..5.0, n in 0.1f64..1e4, length in 0.5f64..3.0) {
        let vn = solve_vn(n, length, q).unwrap();
        prop_assert!(vn > 0.0 && vn <= n);
        prop_assert!(vn < solve_vstar(length, q).unwrap());
    }

    #[test]
    fn steps_shrink_and_preserve_order(q in 1.2f64..5.0, c in 0.0f64..1e4, dt in 1e-5f64..0.1) {
        let driver = Driver::canonical(q, Eta::Constant(1.0)).unwrap();
        let a = exact_flow_step(c, &driver, dt, 0.0, &[0.0]);
        let b = exact_flow_step(2.0 * c + 1.0, &driver, dt, 0.0, &[0.0]);
        prop_assert!(a >= 0.0 && a <= c && a < b);
        let imp = implicit_driver_step(c, &driver, dt, 0.0).unwrap();
        prop_assert!(imp >= 0.0 && imp <= c);
    }
}
