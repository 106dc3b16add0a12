mod common;

use common::{instance, rel_err};
use pg_limits::hard_instances::{
    corollary_nullspace_bound, dimension_curse_bound, kl_state_trajectories_exact,
    le_cam_two_point, lemma4_check, lemma5_floor, lower_bound_theorem1, perturb_system,
    perturbed_gradient_closed_form, riccati_growth_check, scalar_lower_bound, ExperimentBudget,
    ExplorationPolicy, Perturbation,
};
use pg_limits::lqr::{
    closed_loop_gramian, exact_policy_gradient, solve_dare_optimal, solve_lyapunov_value, DARE_TOL,
    DEFAULT_TOL,
};
use pg_limits::random::gaussian_matrix;
use pg_limits::{Controller, CostSpec, Error, Mat, StateSpaceSystem};
use proptest::prelude::*;

/// Step-by-step KL sum with no stationarity shortcut.
fn kl_oracle(s1: &StateSpaceSystem, s2: &StateSpaceSystem, policy: &ExplorationPolicy, n: usize, t: usize) -> f64 {
    let k = &policy.feedback_gain.gain;
    let acl = &s1.a + &s1.b * k;
    let sinv = s1.sigma_w.clone().try_inverse().unwrap();
    let d_b = &s2.b - &s1.b;
    let m = &s2.a - &s1.a + &d_b * k;
    let drive = &s1.sigma_w + &s1.b * &policy.excitation_cov * s1.b.transpose();
    let mut x = Mat::zeros(s1.state_dim(), s1.state_dim());
    let mut total = 0.0;
    for _ in 0..t {
        total += 0.5 * (&sinv * (&m * &x * m.transpose() + &d_b * &policy.excitation_cov * d_b.transpose())).trace();
        x = &acl * &x * acl.transpose() + &drive;
    }
    total * n as f64
}

fn case() -> impl Strategy<Value = (u64, usize, usize, u64)> {
    (any::<u64>(), 1usize..=4, 1usize..=3, any::<u64>())
}

fn delta_for(seed: u64, dx: usize, du: usize, scale: f64) -> Perturbation {
    let mut r = common::rng(seed);
    Perturbation::new(gaussian_matrix(&mut r, dx, du) * scale)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn perturbation_preserves_closed_loop((seed, dx, du, dseed) in case()) {
        let (s1, cost) = instance(seed, dx, du);
        let (p1, k) = solve_dare_optimal(&s1, &cost, DARE_TOL).unwrap();
        let delta = delta_for(dseed, dx, du, 0.1);
        let s2 = perturb_system(&s1, &k, &delta).unwrap();
        let c1 = s1.closed_loop(&k).unwrap();
        let c2 = s2.closed_loop(&k).unwrap();
        let scale = 1.0 + s1.a.amax() + s1.b.amax() * k.gain.amax() + delta.delta.amax() * k.gain.amax();
        prop_assert!((&c1 - &c2).amax() <= 1e-14 * scale * (dx * du) as f64);
        let p2 = solve_lyapunov_value(&s2, &cost, &k, DEFAULT_TOL).unwrap();
        prop_assert!(rel_err(&p2.p, &p1.p) <= 1e-10);
        let g1 = closed_loop_gramian(&s1, &k, DEFAULT_TOL).unwrap();
        let g2 = closed_loop_gramian(&s2, &k, DEFAULT_TOL).unwrap();
        prop_assert!(rel_err(&g2.gamma, &g1.gamma) <= 1e-10);
    }

    #[test]
    fn gap_closed_form_matches_gradient_on_perturbed_system((seed, dx, du, dseed) in case()) {
        let (s1, cost) = instance(seed, dx, du);
        let (_, k) = solve_dare_optimal(&s1, &cost, DARE_TOL).unwrap();
        let delta = delta_for(dseed, dx, du, 0.1);
        let s2 = perturb_system(&s1, &k, &delta).unwrap();
        let closed = perturbed_gradient_closed_form(&s1, &cost, &delta).unwrap();
        let direct = exact_policy_gradient(&s2, &cost, &k).unwrap();
        prop_assert!(rel_err(&closed, &direct) <= 1e-9, "rel err {}", rel_err(&closed, &direct));
    }

    #[test]
    fn kl_properties((seed, dx, du, dseed) in case(), t in 1usize..60, n in 1usize..5) {
        let (s1, cost) = instance(seed, dx, du);
        let (_, k) = solve_dare_optimal(&s1, &cost, DARE_TOL).unwrap();
        let delta = delta_for(dseed, dx, du, 0.2);
        let s2 = perturb_system(&s1, &k, &delta).unwrap();

        let feedback = ExplorationPolicy::pure_feedback(k.clone());
        let b = ExperimentBudget::new(n, t, 1.0).unwrap();
        prop_assert!(kl_state_trajectories_exact(&s1, &s2, &feedback, &b).unwrap() <= 1e-12);

        let policy = ExplorationPolicy::isotropic(k.clone(), 0.5).unwrap();
        let kl = kl_state_trajectories_exact(&s1, &s2, &policy, &b).unwrap();
        let oracle = kl_oracle(&s1, &s2, &policy, n, t);
        prop_assert!((kl - oracle).abs() <= 1e-10 * oracle.max(1e-300));
        prop_assert!(kl > 0.0);

        // A-only perturbation seen through the state second moment.
        let s3 = StateSpaceSystem { a: &s1.a + gaussian_matrix(&mut common::rng(dseed ^ 1), dx, dx) * 0.05, ..s1.clone() };
        let kl3 = kl_state_trajectories_exact(&s1, &s3, &policy, &b).unwrap();
        prop_assert!((kl3 - kl_oracle(&s1, &s3, &policy, n, t)).abs() <= 1e-10 * kl3.max(1e-300));

        let longer = ExperimentBudget::new(n, t + 1, 1.0).unwrap();
        prop_assert!(kl_state_trajectories_exact(&s1, &s2, &policy, &longer).unwrap() >= kl);
        let doubled = ExperimentBudget::new(2 * n, t, 1.0).unwrap();
        let kl2 = kl_state_trajectories_exact(&s1, &s2, &policy, &doubled).unwrap();
        prop_assert!((kl2 - 2.0 * kl).abs() <= 1e-12 * kl2);
    }

    #[test]
    fn certificate_sanity((seed, dx, du, dseed) in case(), scale in 1e-4f64..1.0, nt in 1usize..100_000) {
        let (s1, cost) = instance(seed, dx, du);
        let budget = ExperimentBudget::from_total(nt, 1.0).unwrap();
        let (_, k) = solve_dare_optimal(&s1, &cost, DARE_TOL).unwrap();
        let policy = ExplorationPolicy::isotropic(k, 1.0).unwrap();
        let delta = delta_for(dseed, dx, du, scale);
        let cert = lower_bound_theorem1(&s1, &cost, &delta, &policy, &budget).unwrap();
        prop_assert!(cert.bound_value <= cert.gradient_gap / 2.0);
        prop_assert!(cert.bound_value >= 0.0);
        if cert.kl_value >= 2.0 {
            prop_assert_eq!(cert.bound_value, 0.0);
            prop_assert!(cert.vacuous);
        }
    }
}

#[test]
fn le_cam_edges() {
    assert_eq!(le_cam_two_point(1.0, 0.0), 0.5);
    assert_eq!(le_cam_two_point(1.0, 2.0), 0.0);
    assert_eq!(le_cam_two_point(1.0, 8.0), 0.0);
}

#[test]
fn scalar_certificate_matches_general_construction() {
    let budget = ExperimentBudget::from_total(10_000, 1.0).unwrap();
    for &(a, b) in &[(1.0, 1.0), (1.0, 0.1), (0.5, 2.0), (1.3, 0.4)] {
        let cert = scalar_lower_bound(a, b, 1.0, 1.0, 1.0, &budget).unwrap();
        let s1 = StateSpaceSystem::scalar(a, b, 1.0).unwrap();
        let cost = CostSpec::scalar(1.0, 1.0).unwrap();
        let policy = ExplorationPolicy::new(Controller::new(cert.k_star.clone()), cert.excitation_cov.clone()).unwrap();
        let general = lower_bound_theorem1(&s1, &cost, &cert.delta_used, &policy, &budget).unwrap();
        assert!((general.gradient_gap - cert.gradient_gap).abs() <= 1e-10 * cert.gradient_gap);
        assert!((general.kl_value - cert.kl_value).abs() <= 1e-9 * cert.kl_value.max(1e-12), "{} vs {}", general.kl_value, cert.kl_value);
        // The stationary input energy of the chosen excitation is the budget.
        let energy = policy.stationary_input_energy(&s1).unwrap();
        assert!((energy - 1.0).abs() <= 1e-9 || cert.excitation_cov[(0, 0)] == 0.0);
        assert!((cert.kl_upper_bound.unwrap() - 0.5).abs() <= 1e-12);
        assert!(cert.kl_value <= cert.kl_upper_bound.unwrap());
    }
}

#[test]
fn golden_scalar_certificate() {
    let budget = ExperimentBudget::from_total(10_000, 1.0).unwrap();
    let cert = scalar_lower_bound(1.0, 1.0, 1.0, 1.0, 1.0, &budget).unwrap();
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let acl = (3.0 - 5f64.sqrt()) / 2.0;
    let gamma = 1.0 / (1.0 - acl * acl);
    let delta = 1.0 / (2.0 * 1e4 * (gamma + 1.0)).sqrt();
    assert!((cert.gradient_gap - 2.0 * delta * phi * acl * gamma).abs() <= 1e-14);
    let k = -(5f64.sqrt() - 1.0) / 2.0;
    let s_expected = (1.0 - k * k * gamma) / (k * k / (1.0 - acl * acl) + 1.0);
    assert!((cert.excitation_cov[(0, 0)] - s_expected).abs() <= 1e-12);
    assert!((cert.excitation_cov[(0, 0)] - 0.382).abs() <= 1e-3);
}

#[test]
fn scalar_bound_strictly_decreasing_in_b() {
    let budget = ExperimentBudget::from_total(10_000, 1.0).unwrap();
    let grid: Vec<f64> = (0..=20).map(|i| 10f64.powf(-3.0 + 3.0 * i as f64 / 20.0)).collect();
    let bounds: Vec<f64> = grid
        .iter()
        .map(|&b| scalar_lower_bound(1.0, b, 1.0, 1.0, 1.0, &budget).unwrap().bound_value)
        .collect();
    for w in bounds.windows(2) {
        assert!(w[1] < w[0], "{bounds:?}");
    }
}

#[test]
fn lemma5_floor_holds_on_grid() {
    for dx in 3..=10 {
        for &rho in &[0.1, 0.5, 0.9] {
            let v = riccati_growth_check(dx, rho).unwrap();
            assert!(v >= lemma5_floor(dx), "dx={dx} rho={rho}: {v}");
        }
    }
    assert_eq!(lemma5_floor(4), 17.0);
    assert_eq!(lemma5_floor(8), 4097.0);
}

#[test]
fn lemma4_and_dimension_trend() {
    let budget = ExperimentBudget::from_total(1_000_000, 1.0).unwrap();
    let mut prev = None;
    for dx in 6..=10 {
        let l4 = lemma4_check(dx, 0.5).unwrap();
        assert!(l4.ratio() >= 0.4, "dx={dx}: {}", l4.ratio());
        let unit: f64 = l4.delta1.iter().map(|v| v * v).sum();
        assert!((unit - 1.0).abs() <= 1e-12);
        let c = dimension_curse_bound(dx, 0.5, &budget).unwrap();
        if let Some(p) = prev {
            assert!(c.certificate.bound_value / p >= 3.0);
        }
        prev = Some(c.certificate.bound_value);
    }
}

#[test]
fn nullspace_violation_is_reported() {
    let s = StateSpaceSystem::scalar(1.0, 1.0, 1.0).unwrap();
    let cost = CostSpec::scalar(1.0, 1.0).unwrap();
    let budget = ExperimentBudget::from_total(100, 1.0).unwrap();
    let err = corollary_nullspace_bound(&s, &cost, &budget, &Perturbation::new(Mat::from_element(1, 1, 0.5)))
        .unwrap_err();
    assert!(matches!(err, Error::NullspaceViolation { .. }));
}
