mod common;

use common::{central_difference, instance, rel_err, stein_series};
use pg_limits::linalg::{is_symmetric_psd, stein_residual};
use pg_limits::lqr::{
    closed_loop_gramian, exact_policy_gradient, lqr_cost, lqr_cost_from_gramian, riccati_residual,
    solve_dare_optimal, solve_lyapunov_value, DARE_TOL, DEFAULT_TOL,
};
use pg_limits::Controller;
use proptest::prelude::*;

fn dims() -> impl Strategy<Value = (u64, usize, usize)> {
    (any::<u64>(), 1usize..=4, 1usize..=3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn lyapunov_matches_series_and_is_psd((seed, dx, du) in dims()) {
        let (sys, cost) = instance(seed, dx, du);
        let k = Controller::zeros(du, dx);
        let p = solve_lyapunov_value(&sys, &cost, &k, DEFAULT_TOL).unwrap().p;
        let g = closed_loop_gramian(&sys, &k, DEFAULT_TOL).unwrap().gamma;
        let acl = sys.closed_loop(&k).unwrap();
        let stage = &cost.q + k.gain.transpose() * &cost.r * &k.gain;
        prop_assert!(stein_residual(&acl.transpose(), &stage, &p) <= 1e-10 * p.norm().max(1.0));
        prop_assert!(stein_residual(&acl, &sys.sigma_w, &g) <= 1e-10 * g.norm().max(1.0));
        prop_assert!(rel_err(&p, &stein_series(&acl.transpose(), &stage)) <= 1e-10);
        prop_assert!(rel_err(&g, &stein_series(&acl, &sys.sigma_w)) <= 1e-10);
        prop_assert_eq!(&p, &p.transpose());
        prop_assert_eq!(&g, &g.transpose());
        prop_assert!(is_symmetric_psd(&p, 1e-10) && is_symmetric_psd(&g, 1e-10));
    }

    #[test]
    fn cost_duality((seed, dx, du) in dims()) {
        let (sys, cost) = instance(seed, dx, du);
        let (_, k_star) = solve_dare_optimal(&sys, &cost, DARE_TOL).unwrap();
        for k in [Controller::zeros(du, dx), k_star] {
            let j1 = lqr_cost(&sys, &cost, &k).unwrap();
            let j2 = lqr_cost_from_gramian(&sys, &cost, &k).unwrap();
            prop_assert!((j1 - j2).abs() <= 1e-10 * j1.abs());
        }
    }

    #[test]
    fn gradient_matches_central_differences((seed, dx, du) in dims()) {
        let (sys, cost) = instance(seed, dx, du);
        let k = Controller::zeros(du, dx);
        let exact = exact_policy_gradient(&sys, &cost, &k).unwrap();
        let fd = central_difference(&k, 1e-5, |k| lqr_cost(&sys, &cost, k).unwrap());
        prop_assert!(rel_err(&fd, &exact) <= 1e-6, "rel err {}", rel_err(&fd, &exact));
    }

    #[test]
    fn optimum_is_stationary_and_minimal((seed, dx, du) in dims(), dir_seed in any::<u64>()) {
        let (sys, cost) = instance(seed, dx, du);
        let (p, k) = solve_dare_optimal(&sys, &cost, DARE_TOL).unwrap();
        prop_assert!(riccati_residual(&sys, &cost, &p.p).unwrap() <= 1e-9 * p.p.norm().max(1.0));
        let grad = exact_policy_gradient(&sys, &cost, &k).unwrap();
        prop_assert!(grad.norm() <= 1e-8 * (1.0 + p.p.norm()), "grad {}", grad.norm());
        let j_star = lqr_cost(&sys, &cost, &k).unwrap();
        let mut r = common::rng(dir_seed);
        let dir = pg_limits::random::gaussian_matrix(&mut r, du, dx);
        let step = &dir * (1e-3 / dir.norm());
        for sign in [1.0, -1.0] {
            let kp = Controller::new(&k.gain + &step * sign);
            if let Ok(j) = lqr_cost(&sys, &cost, &kp) {
                prop_assert!(j >= j_star * (1.0 - 1e-14), "{j} < {j_star}");
            }
        }
    }
}

#[test]
fn dare_agrees_with_scalar_closed_form() {
    for &(a, b, q, r) in &[(1.0, 1.0, 1.0, 1.0), (1.5, 0.3, 2.0, 0.5), (0.2, -2.0, 1.0, 3.0)] {
        let sys = pg_limits::StateSpaceSystem::scalar(a, b, 1.0).unwrap();
        let cost = pg_limits::CostSpec::scalar(q, r).unwrap();
        let (p, k) = solve_dare_optimal(&sys, &cost, DARE_TOL).unwrap();
        let s = pg_limits::hard_instances::scalar_lqr(a, b, q, r, 1.0).unwrap();
        assert!((p.p[(0, 0)] - s.p).abs() <= 1e-10 * s.p);
        assert!((k.gain[(0, 0)] - s.k).abs() <= 1e-10 * s.k.abs().max(1.0));
    }
}

#[test]
fn unstable_gain_is_rejected() {
    let sys = pg_limits::StateSpaceSystem::scalar(1.0, 1.0, 1.0).unwrap();
    let cost = pg_limits::CostSpec::scalar(1.0, 1.0).unwrap();
    let err = lqr_cost(&sys, &cost, &Controller::scalar(0.0)).unwrap_err();
    assert!(matches!(err, pg_limits::Error::UnstableClosedLoop { .. }));
}
