//! Two-point lower bounds on policy-gradient estimation error.
//!
//! A perturbation `Δ` maps `S1 = (A, B)` to `S2 = (A - ΔK⋆, B + Δ)`. Both systems
//! share the closed loop `A + BK⋆`, so data collected near `K⋆` barely tells them
//! apart while their policy gradients at `K⋆` differ by `2ΔᵀP(A+BK⋆)Γ`.

mod chain;
mod scalar;

pub use chain::{
    dimension_curse_bound, lemma4_check, lemma5_floor, make_integrator_chain,
    riccati_growth_check, CurseCertificate, IntegratorChain, Lemma4Check,
};
pub use scalar::{scalar_lower_bound, scalar_lqr, two_scalar_demo, ScalarLqr, TwoSystemRow};

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, check_shape, check_square, operator_norm, solve_stein, symmetrize};
use crate::lqr::{
    self, closed_loop_gramian, solve_dare_optimal, Controller, CostSpec,
    StateSpaceSystem, DARE_TOL, DEFAULT_TOL,
};
use crate::Mat;

/// Tolerance for `ΔK⋆ = 0` in the nullspace construction, relative to `max(1, |K⋆|)`.
pub const NULLSPACE_TOL: f64 = 1e-9;

/// Relative change of the second moment below which the KL recursion treats the
/// state covariance as stationary and extrapolates the remaining steps.
const MOMENT_STATIONARY_TOL: f64 = 1e-15;

/// `Δ ∈ R^{d_x × d_u}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    #[serde(with = "crate::serde_matrix")]
    pub delta: Mat,
}

impl Perturbation {
    pub fn new(delta: Mat) -> Self {
        Self { delta }
    }

    pub fn zeros(state_dim: usize, input_dim: usize) -> Self {
        Self::new(Mat::zeros(state_dim, input_dim))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(&self.delta * factor)
    }
}

/// `N` trajectories of length `T` with average input energy at most `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentBudget {
    pub n: usize,
    pub t: usize,
    pub beta: f64,
}

impl ExperimentBudget {
    pub fn new(n: usize, t: usize, beta: f64) -> Result<Self> {
        if n == 0 || t == 0 {
            return Err(Error::InvalidParameter(format!(
                "budget needs N, T >= 1, got N={n}, T={t}"
            )));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "budget needs beta > 0, got {beta}"
            )));
        }
        Ok(Self { n, t, beta })
    }

    /// A single trajectory of length `nt`.
    pub fn from_total(nt: usize, beta: f64) -> Result<Self> {
        Self::new(1, nt, beta)
    }

    pub fn total_steps(&self) -> f64 {
        self.n as f64 * self.t as f64
    }
}

/// `u_t = K x_t + η_t` with `η_t ~ N(0, excitation_cov)` i.i.d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationPolicy {
    pub feedback_gain: Controller,
    #[serde(with = "crate::serde_matrix")]
    pub excitation_cov: Mat,
}

impl ExplorationPolicy {
    pub fn new(feedback_gain: Controller, excitation_cov: Mat) -> Result<Self> {
        check_square(&excitation_cov, feedback_gain.gain.nrows(), "excitation covariance")?;
        if !linalg::is_symmetric_psd(&excitation_cov, 1e-10) {
            return Err(Error::InvalidParameter(
                "excitation covariance must be symmetric positive semidefinite".into(),
            ));
        }
        Ok(Self {
            feedback_gain,
            excitation_cov,
        })
    }

    pub fn pure_feedback(feedback_gain: Controller) -> Self {
        let du = feedback_gain.gain.nrows();
        Self {
            feedback_gain,
            excitation_cov: Mat::zeros(du, du),
        }
    }

    /// Feedback `K` plus isotropic excitation `(β / d_u) I`.
    pub fn isotropic(feedback_gain: Controller, beta: f64) -> Result<Self> {
        let du = feedback_gain.gain.nrows();
        Self::new(feedback_gain, Mat::identity(du, du) * (beta / du as f64))
    }

    /// Feedback `K` plus excitation `sI`, with `s` chosen so the stationary input
    /// energy `E uᵀu` equals `β`. When the feedback part alone already spends the
    /// budget, `s = 0`.
    pub fn budget_normalized(sys: &StateSpaceSystem, k: &Controller, beta: f64) -> Result<Self> {
        let acl = lqr::stable_closed_loop(sys, k)?;
        let du = sys.input_dim();
        let gamma_w = solve_stein(&acl, &sys.sigma_w, DEFAULT_TOL)?;
        let bbt = symmetrize(&(&sys.b * sys.b.transpose()));
        let gamma_b = solve_stein(&acl, &bbt, DEFAULT_TOL)?;
        let kt = k.gain.transpose();
        let spent = (&k.gain * gamma_w * &kt).trace();
        let per_unit = (&k.gain * gamma_b * &kt).trace() + du as f64;
        let s = ((beta - spent) / per_unit).max(0.0);
        Ok(Self {
            feedback_gain: k.clone(),
            excitation_cov: Mat::identity(du, du) * s,
        })
    }

    /// Stationary `E uᵀu = tr(K Γ Kᵀ) + tr(Σ_η)`, where `Γ` is the state covariance
    /// driven by `Σ_W + B Σ_η Bᵀ`.
    pub fn stationary_input_energy(&self, sys: &StateSpaceSystem) -> Result<f64> {
        let acl = lqr::stable_closed_loop(sys, &self.feedback_gain)?;
        let drive = symmetrize(&(&sys.sigma_w + &sys.b * &self.excitation_cov * sys.b.transpose()));
        let gamma = solve_stein(&acl, &drive, DEFAULT_TOL)?;
        let k = &self.feedback_gain.gain;
        Ok((k * gamma * k.transpose()).trace() + self.excitation_cov.trace())
    }
}

/// Evaluated two-point certificate together with the quantities it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundCertificate {
    /// `max(0, gap/2 · (1 - √(kl/2)))`.
    pub bound_value: f64,
    /// `‖2ΔᵀP⋆(A+BK⋆)Γ⋆‖_op`.
    pub gradient_gap: f64,
    pub kl_value: f64,
    pub delta_used: Perturbation,
    /// `1 - √(kl/2) <= 0`.
    pub vacuous: bool,
    #[serde(with = "crate::serde_matrix")]
    pub k_star: Mat,
    #[serde(with = "crate::serde_matrix")]
    pub p_star: Mat,
    #[serde(with = "crate::serde_matrix")]
    pub gramian: Mat,
    #[serde(with = "crate::serde_matrix")]
    pub excitation_cov: Mat,
    /// `Δ² NT (Γ⋆ + β)`, the scalar KL upper bound. Scalar certificates only.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kl_upper_bound: Option<f64>,
    /// Closed-form rate: `|P⋆(a+bk⋆)Γ⋆| / √(NT(β+Γ⋆))` for the state-feedback scalar
    /// case, `P⋆(a+bk⋆)Γ_ν / (2√(NTβ))` for the output-feedback scalar case.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rate_quantity: Option<f64>,
}

/// `A' = A - ΔK⋆`, `B' = B + Δ`, same noise.
pub fn perturb_system(
    s1: &StateSpaceSystem,
    k_star: &Controller,
    delta: &Perturbation,
) -> Result<StateSpaceSystem> {
    check_shape(&k_star.gain, s1.input_dim(), s1.state_dim(), "K")?;
    check_shape(&delta.delta, s1.state_dim(), s1.input_dim(), "Delta")?;
    Ok(StateSpaceSystem {
        a: &s1.a - &delta.delta * &k_star.gain,
        b: &s1.b + &delta.delta,
        sigma_w: s1.sigma_w.clone(),
    })
}

/// `2ΔᵀP⋆(A+BK⋆)Γ⋆` with all quantities computed on `S1`.
pub fn perturbed_gradient_closed_form(
    s1: &StateSpaceSystem,
    cost: &CostSpec,
    delta: &Perturbation,
) -> Result<Mat> {
    check_shape(&delta.delta, s1.state_dim(), s1.input_dim(), "Delta")?;
    let (p, k) = solve_dare_optimal(s1, cost, DARE_TOL)?;
    let gamma = closed_loop_gramian(s1, &k, DEFAULT_TOL)?;
    let acl = s1.closed_loop(&k)?;
    Ok(gap_matrix(&delta.delta, &p.p, &acl, &gamma.gamma))
}

pub(crate) fn gap_matrix(delta: &Mat, p: &Mat, acl: &Mat, gamma: &Mat) -> Mat {
    delta.transpose() * p * acl * gamma * 2.0
}

/// KL divergence between the trajectory laws of `S1` and `S2` under `policy`,
/// for data generated by `S1`:
/// `N Σ_{t<T} ½ E‖(A₁-A₂)x_t + (B₁-B₂)u_t‖²_{Σ_W⁻¹}`. The expectation is computed
/// exactly by propagating `X_t = E x_t x_tᵀ` from `x_0 = 0`.
pub fn kl_state_trajectories_exact(
    s1: &StateSpaceSystem,
    s2: &StateSpaceSystem,
    policy: &ExplorationPolicy,
    budget: &ExperimentBudget,
) -> Result<f64> {
    let n = s1.state_dim();
    let m = s1.input_dim();
    if s2.a.shape() != (n, n) || s2.b.shape() != (n, m) {
        return Err(dim_err("systems must have the same dimensions"));
    }
    check_square(&policy.excitation_cov, m, "excitation covariance")?;
    let chol = symmetrize(&s1.sigma_w)
        .cholesky()
        .ok_or(Error::SingularNoise)?;
    let acl = lqr::stable_closed_loop(s1, &policy.feedback_gain)?;
    let k = &policy.feedback_gain.gain;
    let d_b = &s1.b - &s2.b;
    let mixed = &s1.a - &s2.a + &d_b * k;
    let sigma_inv = chol.inverse();
    let drive = symmetrize(&(&s1.sigma_w + &s1.b * &policy.excitation_cov * s1.b.transpose()));

    let excitation_term = 0.5 * (&sigma_inv * &d_b * &policy.excitation_cov * d_b.transpose()).trace();
    let weight = symmetrize(&(mixed.transpose() * &sigma_inv * &mixed)) * 0.5;

    let mut x = Mat::zeros(n, n);
    let mut total = 0.0;
    let mut t = 0;
    while t < budget.t {
        let step = excitation_term + (&weight * &x).trace();
        total += step;
        t += 1;
        let next = symmetrize(&(&acl * &x * acl.transpose() + &drive));
        let scale = next.amax();
        let stationary = scale == 0.0 || (&next - &x).amax() <= MOMENT_STATIONARY_TOL * scale;
        x = next;
        if stationary && t < budget.t {
            let step = excitation_term + (&weight * &x).trace();
            total += step * (budget.t - t) as f64;
            break;
        }
    }
    Ok((total * budget.n as f64).max(0.0))
}

/// Le Cam's two-point bound with Pinsker: `max(0, (gap/2)(1 - √(kl/2)))`.
pub fn le_cam_two_point(gap_delta: f64, kl: f64) -> f64 {
    (gap_delta / 2.0 * (1.0 - (kl / 2.0).sqrt())).max(0.0)
}

/// Budget-normalized exploration around the optimal gain of `S1`.
pub fn default_policy(
    s1: &StateSpaceSystem,
    cost: &CostSpec,
    budget: &ExperimentBudget,
) -> Result<ExplorationPolicy> {
    let (_, k) = solve_dare_optimal(s1, cost, DARE_TOL)?;
    ExplorationPolicy::budget_normalized(s1, &k, budget.beta)
}

/// Two-point certificate for `S1` against `S2(Δ)`.
pub fn lower_bound_theorem1(
    s1: &StateSpaceSystem,
    cost: &CostSpec,
    delta: &Perturbation,
    policy: &ExplorationPolicy,
    budget: &ExperimentBudget,
) -> Result<LowerBoundCertificate> {
    check_shape(&delta.delta, s1.state_dim(), s1.input_dim(), "Delta")?;
    let (p, k) = solve_dare_optimal(s1, cost, DARE_TOL)?;
    certificate_at(s1, &p.p, &k, delta, policy, budget)
}

/// Certificate for a known optimum `(P⋆, K⋆)` of `sys`. The Gramian and the KL
/// kernel both use `sys.sigma_w`.
pub(crate) fn certificate_at(
    sys: &StateSpaceSystem,
    p: &Mat,
    k: &Controller,
    delta: &Perturbation,
    policy: &ExplorationPolicy,
    budget: &ExperimentBudget,
) -> Result<LowerBoundCertificate> {
    let gamma = closed_loop_gramian(sys, k, DEFAULT_TOL)?;
    let acl = sys.closed_loop(k)?;
    let gap = operator_norm(&gap_matrix(&delta.delta, p, &acl, &gamma.gamma));
    let s2 = perturb_system(sys, k, delta)?;
    let kl = kl_state_trajectories_exact(sys, &s2, policy, budget)?;
    Ok(assemble(gap, kl, delta.clone(), k, p, &gamma.gamma, &policy.excitation_cov))
}

pub(crate) fn assemble(
    gap: f64,
    kl: f64,
    delta: Perturbation,
    k: &Controller,
    p: &Mat,
    gamma: &Mat,
    excitation_cov: &Mat,
) -> LowerBoundCertificate {
    LowerBoundCertificate {
        bound_value: le_cam_two_point(gap, kl),
        gradient_gap: gap,
        kl_value: kl,
        delta_used: delta,
        vacuous: 1.0 - (kl / 2.0).sqrt() <= 0.0,
        k_star: k.gain.clone(),
        p_star: p.clone(),
        gramian: gamma.clone(),
        excitation_cov: excitation_cov.clone(),
        kl_upper_bound: None,
        rate_quantity: None,
    }
}

/// Nullspace certificate: `Δ` with `ΔK⋆ = 0` and `‖Δ‖_op <= 1` is rescaled to
/// `Δ / √(βNT)`. Only `B` changes, so `S2` is indistinguishable from `S1` under pure
/// `K⋆` feedback and the KL is driven by the excitation alone.
pub fn corollary_nullspace_bound(
    s1: &StateSpaceSystem,
    cost: &CostSpec,
    budget: &ExperimentBudget,
    delta: &Perturbation,
) -> Result<LowerBoundCertificate> {
    check_shape(&delta.delta, s1.state_dim(), s1.input_dim(), "Delta")?;
    let (p, k) = solve_dare_optimal(s1, cost, DARE_TOL)?;
    let leak = (&delta.delta * &k.gain).norm();
    if leak > NULLSPACE_TOL * k.gain.norm().max(1.0) {
        return Err(Error::NullspaceViolation { norm: leak });
    }
    let op = operator_norm(&delta.delta);
    if op > 1.0 + 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "nullspace perturbation needs operator norm <= 1, got {op}"
        )));
    }
    let scaled = delta.scaled(1.0 / (budget.beta * budget.total_steps()).sqrt());
    let policy = ExplorationPolicy::budget_normalized(s1, &k, budget.beta)?;
    certificate_at(s1, &p.p, &k, &scaled, &policy, budget)
}
