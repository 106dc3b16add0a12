//! Output feedback through the steady-state filter reduction.
//!
//! With `y_t = C x_t + v_t`, the filter state obeys `x̂' = A x̂ + B u + ν` with
//! innovations `ν ~ N(0, Σ_ν)`. Costs, gradients and certificates for the output
//! gain `K` (`u = K x̂`) are evaluated on that reduction.

mod scalar;

pub use scalar::{
    make_almost_scalar_po, markov_parameter_sweep, scalar_po_bound, scalar_po_quantities,
    MarkovRow, ScalarPoQuantities,
};

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::hard_instances::{
    certificate_at, ExperimentBudget, ExplorationPolicy, LowerBoundCertificate, Perturbation,
};
use crate::linalg::{self, check_shape, check_square, symmetrize};
use crate::lqr::{
    self, solve_dare_optimal, solve_lyapunov_value, stationarity_factor, Controller, CostSpec,
    Gramian, StateSpaceSystem, DARE_TOL, DEFAULT_TOL,
};
use crate::Mat;

/// Residual tolerance of the steady-state filter iteration, relative to `max(1, |F|)`.
pub const FILTER_TOL: f64 = 1e-12;
pub const FILTER_MAX_ITERS: usize = 1_000_000;

/// `x' = Ax + Bu + w`, `y = Cx + v`, `w ~ N(0, Σ_W)`, `v ~ N(0, Σ_V)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSystem {
    #[serde(with = "crate::serde_matrix")]
    pub a: Mat,
    #[serde(with = "crate::serde_matrix")]
    pub b: Mat,
    #[serde(with = "crate::serde_matrix")]
    pub c: Mat,
    #[serde(with = "crate::serde_matrix")]
    pub sigma_w: Mat,
    #[serde(with = "crate::serde_matrix")]
    pub sigma_v: Mat,
}

impl OutputSystem {
    pub fn new(a: Mat, b: Mat, c: Mat, sigma_w: Mat, sigma_v: Mat) -> Result<Self> {
        let state = StateSpaceSystem::new(a, b, sigma_w)?;
        let n = state.state_dim();
        if c.ncols() != n {
            return Err(dim_err(format!("C must have {n} columns, got {}", c.ncols())));
        }
        check_square(&sigma_v, c.nrows(), "SigmaV")?;
        if !linalg::is_positive_definite(&sigma_v) {
            return Err(Error::InvalidParameter(
                "SigmaV must be symmetric positive definite".into(),
            ));
        }
        Ok(Self {
            a: state.a,
            b: state.b,
            c,
            sigma_w: state.sigma_w,
            sigma_v,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    /// `(A, B, Σ_W)`, as if the state were measured.
    pub fn state_feedback(&self) -> StateSpaceSystem {
        StateSpaceSystem {
            a: self.a.clone(),
            b: self.b.clone(),
            sigma_w: self.sigma_w.clone(),
        }
    }

    /// `(A, B, Σ_ν)`: the filter reduction driven by innovations.
    pub fn innovation_system(&self, filter: &SteadyStateFilter) -> StateSpaceSystem {
        StateSpaceSystem {
            a: self.a.clone(),
            b: self.b.clone(),
            sigma_w: filter.sigma_nu.clone(),
        }
    }

    fn check_f(&self, f: &Mat) -> Result<()> {
        check_square(f, self.state_dim(), "F")
    }
}

/// `ξ' = A_dyn ξ + B_dyn y`, `u = K ξ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicController {
    #[serde(with = "crate::serde_matrix")]
    pub a_dyn: Mat,
    #[serde(with = "crate::serde_matrix")]
    pub b_dyn: Mat,
    #[serde(with = "crate::serde_matrix")]
    pub k: Mat,
}

impl DynamicController {
    pub fn new(a_dyn: Mat, b_dyn: Mat, k: Mat) -> Result<Self> {
        let n = a_dyn.nrows();
        check_square(&a_dyn, n, "A_dyn")?;
        if b_dyn.nrows() != n {
            return Err(dim_err(format!("B_dyn must have {n} rows, got {}", b_dyn.nrows())));
        }
        if k.ncols() != n {
            return Err(dim_err(format!("K must have {n} columns, got {}", k.ncols())));
        }
        Ok(Self { a_dyn, b_dyn, k })
    }

    /// Predictor `ξ' = Aξ + Bu + L(y - Cξ)` with the steady-state gain `L`.
    pub fn filter_predictor(g: &OutputSystem, filter: &SteadyStateFilter, k: &Controller) -> Result<Self> {
        check_shape(&k.gain, g.input_dim(), g.state_dim(), "K")?;
        let a_dyn = &g.a + &g.b * &k.gain - &filter.l * &g.c;
        Self::new(a_dyn, filter.l.clone(), k.gain.clone())
    }

    pub fn state_dim(&self) -> usize {
        self.a_dyn.nrows()
    }
}

/// Steady state of the filter recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateFilter {
    /// Prediction error covariance.
    #[serde(with = "crate::serde_matrix")]
    pub f: Mat,
    /// `F Cᵀ (C F Cᵀ + Σ_V)⁻¹`.
    #[serde(with = "crate::serde_matrix")]
    pub l: Mat,
    /// `L (C F Cᵀ + Σ_V) Lᵀ`.
    #[serde(with = "crate::serde_matrix")]
    pub sigma_nu: Mat,
    pub iterations: usize,
    pub residual: f64,
}

fn innovation_factor(g: &OutputSystem, f: &Mat) -> Result<(Mat, Mat)> {
    g.check_f(f)?;
    let s = symmetrize(&(&g.c * f * g.c.transpose() + &g.sigma_v));
    let chol = s.clone().cholesky().ok_or(Error::InvalidParameter(
        "C F Cᵀ + SigmaV is not positive definite".into(),
    ))?;
    // L = F Cᵀ S⁻¹, computed as (S⁻¹ C F)ᵀ.
    let l = chol.solve(&(&g.c * f)).transpose();
    Ok((s, l))
}

/// `Σ_W + A F Aᵀ - F Cᵀ (C F Cᵀ + Σ_V)⁻¹ C F`, symmetrized.
pub fn filter_riccati_step(g: &OutputSystem, f: &Mat) -> Result<Mat> {
    let (_, l) = innovation_factor(g, f)?;
    Ok(symmetrize(
        &(&g.sigma_w + &g.a * f * g.a.transpose() - l * &g.c * f),
    ))
}

/// `F Cᵀ (C F Cᵀ + Σ_V)⁻¹`.
pub fn filter_gain(g: &OutputSystem, f: &Mat) -> Result<Mat> {
    Ok(innovation_factor(g, f)?.1)
}

/// `L (C F Cᵀ + Σ_V) Lᵀ`, symmetrized.
pub fn innovation_covariance(g: &OutputSystem, f: &Mat, l: &Mat) -> Result<Mat> {
    g.check_f(f)?;
    check_shape(l, g.state_dim(), g.output_dim(), "L")?;
    let s = &g.c * f * g.c.transpose() + &g.sigma_v;
    Ok(symmetrize(&(l * s * l.transpose())))
}

/// Fixed point of [`filter_riccati_step`] from `F = Σ_W`.
///
/// The map can approach its fixed point with alternating overshoot (slope near
/// `-1`), so each update is averaged with the previous iterate. Averaging does not
/// move the fixed point; the reported residual is that of the undamped map.
pub fn steady_state_filter(g: &OutputSystem, tol: f64, max_iters: usize) -> Result<SteadyStateFilter> {
    let mut f = g.sigma_w.clone();
    let mut residual = f64::INFINITY;
    for iteration in 0..=max_iters {
        let next = filter_riccati_step(g, &f)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonConvergence {
                what: "filter riccati iteration",
                iterations: iteration,
                residual: f64::INFINITY,
            });
        }
        residual = linalg::frobenius(&(&next - &f));
        if residual <= tol * linalg::frobenius(&f).max(1.0) {
            let l = filter_gain(g, &f)?;
            let sigma_nu = innovation_covariance(g, &f, &l)?;
            return Ok(SteadyStateFilter {
                f,
                l,
                sigma_nu,
                iterations: iteration,
                residual,
            });
        }
        if iteration == max_iters {
            break;
        }
        f = symmetrize(&((&f + &next) * 0.5));
    }
    Err(Error::NonConvergence {
        what: "filter riccati iteration",
        iterations: max_iters,
        residual,
    })
}

fn default_filter(g: &OutputSystem) -> Result<SteadyStateFilter> {
    steady_state_filter(g, FILTER_TOL, FILTER_MAX_ITERS)
}

/// `tr(P_K Σ_ν) + tr(Q (I - L C))`.
pub fn restricted_cost(g: &OutputSystem, cost: &CostSpec, k: &Controller) -> Result<f64> {
    let sys = g.state_feedback();
    let p = solve_lyapunov_value(&sys, cost, k, DEFAULT_TOL)?;
    let filter = default_filter(g)?;
    let n = g.state_dim();
    let unobserved = Mat::identity(n, n) - &filter.l * &g.c;
    Ok((&p.p * &filter.sigma_nu).trace() + (&cost.q * unobserved).trace())
}

/// `Γ = Σ_ν + (A+BK) Γ (A+BK)ᵀ`.
pub fn innovation_gramian(g: &OutputSystem, k: &Controller, tol: f64) -> Result<Gramian> {
    let acl = lqr::stable_closed_loop(&g.state_feedback(), k)?;
    let filter = default_filter(g)?;
    lqr::gramian_for(&acl, &filter.sigma_nu, tol)
}

/// `2((R + BᵀP_K B)K + BᵀP_K A) Γ_{K,ν}`.
pub fn restricted_policy_gradient(g: &OutputSystem, cost: &CostSpec, k: &Controller) -> Result<Mat> {
    let sys = g.state_feedback();
    let p = solve_lyapunov_value(&sys, cost, k, DEFAULT_TOL)?;
    let gamma = innovation_gramian(g, k, DEFAULT_TOL)?;
    Ok(stationarity_factor(&sys, cost, k, &p.p) * gamma.gamma * 2.0)
}

/// Budget-normalized exploration around `K⋆` on the filter reduction.
pub fn default_policy_po(
    g: &OutputSystem,
    cost: &CostSpec,
    budget: &ExperimentBudget,
) -> Result<ExplorationPolicy> {
    let filter = default_filter(g)?;
    let (_, k) = solve_dare_optimal(&g.state_feedback(), cost, DARE_TOL)?;
    ExplorationPolicy::budget_normalized(&g.innovation_system(&filter), &k, budget.beta)
}

/// Two-point certificate for `G1` against `G2(Δ) = (A - ΔK⋆, B + Δ, C)`, with the
/// Gramian and the KL both taken on the innovation-driven reduction.
pub fn lower_bound_theorem2(
    g1: &OutputSystem,
    cost: &CostSpec,
    delta: &Perturbation,
    policy: &ExplorationPolicy,
    budget: &ExperimentBudget,
) -> Result<LowerBoundCertificate> {
    check_shape(&delta.delta, g1.state_dim(), g1.input_dim(), "Delta")?;
    let filter = default_filter(g1)?;
    let (p, k) = solve_dare_optimal(&g1.state_feedback(), cost, DARE_TOL)?;
    certificate_at(&g1.innovation_system(&filter), &p.p, &k, delta, policy, budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(a: f64, c: f64, sw: f64, sv: f64) -> OutputSystem {
        let m = |v: f64| Mat::from_element(1, 1, v);
        OutputSystem::new(m(a), m(1.0), m(c), m(sw), m(sv)).unwrap()
    }

    #[test]
    fn riccati_step_examples() {
        let g = scalar(0.0, 1.0, 1.0, 1.0);
        let f = filter_riccati_step(&g, &Mat::from_element(1, 1, 1.0)).unwrap();
        assert_relative_eq!(f[(0, 0)], 0.5, epsilon = 1e-15);
        let f = filter_riccati_step(&g, &Mat::from_element(1, 1, 0.5)).unwrap();
        assert_relative_eq!(f[(0, 0)], 5.0 / 6.0, epsilon = 1e-15);
        let g0 = scalar(0.5, 0.0, 1.0, 1.0);
        let f = filter_riccati_step(&g0, &Mat::from_element(1, 1, 2.0)).unwrap();
        assert_relative_eq!(f[(0, 0)], 1.5, epsilon = 1e-15);
    }

    #[test]
    fn gain_and_innovation_examples() {
        let g = scalar(0.0, 1.0, 1.0, 1.0);
        let one = Mat::from_element(1, 1, 1.0);
        let l = filter_gain(&g, &one).unwrap();
        assert_relative_eq!(l[(0, 0)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(innovation_covariance(&g, &one, &l).unwrap()[(0, 0)], 0.5, epsilon = 1e-15);
        assert_eq!(filter_gain(&g, &Mat::zeros(1, 1)).unwrap()[(0, 0)], 0.0);
        assert_eq!(filter_gain(&scalar(0.0, 0.0, 1.0, 1.0), &one).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn steady_state_scalar_values() {
        let g = scalar(0.0, 1.0, 1.0, 1.0);
        let filt = steady_state_filter(&g, 1e-13, FILTER_MAX_ITERS).unwrap();
        let f = 0.5f64.sqrt();
        assert_relative_eq!(filt.f[(0, 0)], f, epsilon = 1e-12);
        assert_relative_eq!(filt.sigma_nu[(0, 0)], f * f / (f + 1.0), epsilon = 1e-12);
        assert_relative_eq!(filt.l[(0, 0)], 2f64.sqrt() - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn unobserved_filter_is_lyapunov() {
        let g = scalar(0.5, 0.0, 1.0, 1.0);
        let filt = steady_state_filter(&g, 1e-13, FILTER_MAX_ITERS).unwrap();
        assert_relative_eq!(filt.f[(0, 0)], 4.0 / 3.0, epsilon = 1e-12);
        assert_eq!(filt.l[(0, 0)], 0.0);
        assert_eq!(filt.sigma_nu[(0, 0)], 0.0);
        let gamma = innovation_gramian(&g, &Controller::scalar(0.0), 1e-12).unwrap();
        assert_eq!(gamma.gamma[(0, 0)], 0.0);
        let cost = CostSpec::scalar(1.0, 1.0).unwrap();
        let grad = restricted_policy_gradient(&g, &cost, &Controller::scalar(-0.2)).unwrap();
        assert_eq!(grad[(0, 0)], 0.0);
    }

    #[test]
    fn restricted_cost_scalar_example() {
        let g = scalar(0.0, 1.0, 1.0, 1.0);
        let cost = CostSpec::scalar(1.0, 1.0).unwrap();
        let j = restricted_cost(&g, &cost, &Controller::scalar(0.0)).unwrap();
        assert_relative_eq!(j, 0.878_679_656_440_357_4, epsilon = 1e-10);
        let gamma = innovation_gramian(&g, &Controller::scalar(0.0), 1e-12).unwrap();
        assert_relative_eq!(gamma.gamma[(0, 0)], 0.292_893_218_813_452_5, epsilon = 1e-10);
    }

    #[test]
    fn noiseless_process_keeps_additive_term() {
        let g = scalar(0.5, 1.0, 0.0, 1.0);
        let cost = CostSpec::scalar(1.0, 1.0).unwrap();
        let j = restricted_cost(&g, &cost, &Controller::scalar(-0.1)).unwrap();
        assert_relative_eq!(j, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn gradient_vanishes_at_state_feedback_optimum() {
        let g = scalar(0.9, 0.7, 1.0, 0.5);
        let cost = CostSpec::scalar(1.0, 1.0).unwrap();
        let (_, k) = solve_dare_optimal(&g.state_feedback(), &cost, DARE_TOL).unwrap();
        assert!(restricted_policy_gradient(&g, &cost, &k).unwrap().norm() <= 1e-12);
    }

    #[test]
    fn no_steady_state_when_literal_map_diverges() {
        let g = scalar(1.5, 1.0, 1.0, 1.0);
        assert!(matches!(
            steady_state_filter(&g, 1e-12, 10_000),
            Err(Error::NonConvergence { .. })
        ));
    }

    #[test]
    fn rejects_singular_measurement_noise() {
        let m = |v: f64| Mat::from_element(1, 1, v);
        assert!(OutputSystem::new(m(0.5), m(1.0), m(1.0), m(1.0), m(0.0)).is_err());
    }
}
