//! Exact LQR machinery for static state feedback `u_t = K x_t` on
//! `x_{t+1} = A x_t + B u_t + w_t`, `w_t ~ N(0, Σ_W)`.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, check_shape, check_square, solve_stein, symmetrize};
use crate::Mat;

pub use crate::linalg::spectral_radius;

/// Default stability margin: `K` is stabilizing iff `ρ(A + BK) < 1 - margin`.
pub const DEFAULT_MARGIN: f64 = 1e-9;
/// Default relative residual tolerance for Lyapunov and Gramian solves.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Relative residual tolerance of the Riccati fixed-point iteration.
pub const DARE_TOL: f64 = 1e-12;
pub const DARE_MAX_ITERS: usize = 1_000_000;

const PSD_TOL: f64 = 1e-10;

/// State-feedback instance `(A, B)` with process-noise covariance `Σ_W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpaceSystem {
    #[serde(with = "crate::serde_matrix")]
    pub a: Mat,
    #[serde(with = "crate::serde_matrix")]
    pub b: Mat,
    #[serde(with = "crate::serde_matrix")]
    pub sigma_w: Mat,
}

impl StateSpaceSystem {
    pub fn new(a: Mat, b: Mat, sigma_w: Mat) -> Result<Self> {
        let n = a.nrows();
        check_square(&a, n, "A")?;
        if b.nrows() != n {
            return Err(dim_err(format!("B must have {n} rows, got {}", b.nrows())));
        }
        check_square(&sigma_w, n, "SigmaW")?;
        if !linalg::is_symmetric_psd(&sigma_w, PSD_TOL) {
            return Err(Error::InvalidParameter(
                "SigmaW must be symmetric positive semidefinite".into(),
            ));
        }
        Ok(Self { a, b, sigma_w })
    }

    /// Scalar system `x' = a x + b u + w` with `Var(w) = noise_var`.
    pub fn scalar(a: f64, b: f64, noise_var: f64) -> Result<Self> {
        Self::new(
            Mat::from_element(1, 1, a),
            Mat::from_element(1, 1, b),
            Mat::from_element(1, 1, noise_var),
        )
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// `A + BK`.
    pub fn closed_loop(&self, k: &Controller) -> Result<Mat> {
        check_shape(&k.gain, self.input_dim(), self.state_dim(), "K")?;
        Ok(&self.a + &self.b * &k.gain)
    }

    /// Same dynamics with a different noise covariance.
    pub fn with_noise(&self, sigma_w: Mat) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), sigma_w)
    }
}

/// Quadratic stage cost `xᵀQx + uᵀRu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    #[serde(with = "crate::serde_matrix")]
    pub q: Mat,
    #[serde(with = "crate::serde_matrix")]
    pub r: Mat,
}

impl CostSpec {
    pub fn new(q: Mat, r: Mat) -> Result<Self> {
        if !q.is_square() || !r.is_square() {
            return Err(dim_err("Q and R must be square"));
        }
        if !linalg::is_symmetric_psd(&q, PSD_TOL) {
            return Err(Error::InvalidParameter(
                "Q must be symmetric positive semidefinite".into(),
            ));
        }
        if !linalg::is_positive_definite(&r) {
            return Err(Error::InvalidParameter(
                "R must be symmetric positive definite".into(),
            ));
        }
        Ok(Self { q, r })
    }

    pub fn scalar(q: f64, r: f64) -> Result<Self> {
        Self::new(Mat::from_element(1, 1, q), Mat::from_element(1, 1, r))
    }

    pub fn identity(state_dim: usize, input_dim: usize) -> Self {
        Self {
            q: Mat::identity(state_dim, state_dim),
            r: Mat::identity(input_dim, input_dim),
        }
    }

    fn check_against(&self, sys: &StateSpaceSystem) -> Result<()> {
        check_square(&self.q, sys.state_dim(), "Q")?;
        check_square(&self.r, sys.input_dim(), "R")
    }
}

/// Static feedback gain, `u_t = K x_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Controller {
    #[serde(with = "crate::serde_matrix")]
    pub gain: Mat,
}

impl Controller {
    pub fn new(gain: Mat) -> Self {
        Self { gain }
    }

    pub fn zeros(input_dim: usize, state_dim: usize) -> Self {
        Self::new(Mat::zeros(input_dim, state_dim))
    }

    pub fn scalar(k: f64) -> Self {
        Self::new(Mat::from_element(1, 1, k))
    }
}

/// Solution `P_K` of `P = Q + KᵀRK + (A+BK)ᵀ P (A+BK)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueMatrix {
    pub p: Mat,
}

/// Closed-loop controllability Gramian `Γ = Σ + (A+BK) Γ (A+BK)ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gramian {
    pub gamma: Mat,
}

pub fn is_stabilizing(k: &Controller, sys: &StateSpaceSystem, margin: f64) -> Result<bool> {
    let acl = sys.closed_loop(k)?;
    Ok(spectral_radius(&acl)? < 1.0 - margin)
}

/// Returns `A + BK` if `K` is stabilizing with the default margin.
pub(crate) fn stable_closed_loop(sys: &StateSpaceSystem, k: &Controller) -> Result<Mat> {
    let acl = sys.closed_loop(k)?;
    let rho = spectral_radius(&acl)?;
    if rho < 1.0 - DEFAULT_MARGIN {
        Ok(acl)
    } else {
        Err(Error::UnstableClosedLoop {
            spectral_radius: rho,
        })
    }
}

pub fn solve_lyapunov_value(
    sys: &StateSpaceSystem,
    cost: &CostSpec,
    k: &Controller,
    tol: f64,
) -> Result<ValueMatrix> {
    cost.check_against(sys)?;
    let acl = stable_closed_loop(sys, k)?;
    let stage = &cost.q + k.gain.transpose() * &cost.r * &k.gain;
    let p = solve_stein(&acl.transpose(), &symmetrize(&stage), tol)?;
    Ok(ValueMatrix { p })
}

pub fn closed_loop_gramian(sys: &StateSpaceSystem, k: &Controller, tol: f64) -> Result<Gramian> {
    let acl = stable_closed_loop(sys, k)?;
    gramian_for(&acl, &sys.sigma_w, tol)
}

/// Gramian of an already-formed stable closed loop driven by `noise`.
pub(crate) fn gramian_for(acl: &Mat, noise: &Mat, tol: f64) -> Result<Gramian> {
    Ok(Gramian {
        gamma: solve_stein(acl, noise, tol)?,
    })
}

/// `J(K) = tr(P_K Σ_W)`.
pub fn lqr_cost(sys: &StateSpaceSystem, cost: &CostSpec, k: &Controller) -> Result<f64> {
    let p = solve_lyapunov_value(sys, cost, k, DEFAULT_TOL)?;
    Ok((&p.p * &sys.sigma_w).trace())
}

/// `J(K) = tr((Q + KᵀRK) Γ_K)`, the Gramian form of the same cost.
pub fn lqr_cost_from_gramian(
    sys: &StateSpaceSystem,
    cost: &CostSpec,
    k: &Controller,
) -> Result<f64> {
    cost.check_against(sys)?;
    let gamma = closed_loop_gramian(sys, k, DEFAULT_TOL)?;
    let stage = &cost.q + k.gain.transpose() * &cost.r * &k.gain;
    Ok((stage * gamma.gamma).trace())
}

/// `(R + BᵀPB)K + BᵀPA`, the factor that vanishes at the optimum.
pub(crate) fn stationarity_factor(sys: &StateSpaceSystem, cost: &CostSpec, k: &Controller, p: &Mat) -> Mat {
    let btp = sys.b.transpose() * p;
    (&cost.r + &btp * &sys.b) * &k.gain + btp * &sys.a
}

/// `∇_K J = 2((R + BᵀP_K B)K + BᵀP_K A) Γ_K`.
pub fn exact_policy_gradient(sys: &StateSpaceSystem, cost: &CostSpec, k: &Controller) -> Result<Mat> {
    let p = solve_lyapunov_value(sys, cost, k, DEFAULT_TOL)?;
    let gamma = closed_loop_gramian(sys, k, DEFAULT_TOL)?;
    Ok(stationarity_factor(sys, cost, k, &p.p) * gamma.gamma * 2.0)
}

/// `|P - Q - AᵀPA + AᵀPB(R+BᵀPB)⁻¹BᵀPA|_F / max(1, |P|_F)`.
pub fn riccati_residual(sys: &StateSpaceSystem, cost: &CostSpec, p: &Mat) -> Result<f64> {
    let next = riccati_step(sys, cost, p)?;
    Ok((next - p).norm() / p.norm().max(1.0))
}

fn riccati_step(sys: &StateSpaceSystem, cost: &CostSpec, p: &Mat) -> Result<Mat> {
    let btp = sys.b.transpose() * p;
    let g = &cost.r + &btp * &sys.b;
    let h = btp * &sys.a;
    let chol = symmetrize(&g).cholesky().ok_or(Error::NonConvergence {
        what: "riccati iteration",
        iterations: 0,
        residual: f64::NAN,
    })?;
    let correction = h.transpose() * chol.solve(&h);
    Ok(symmetrize(
        &(&cost.q + sys.a.transpose() * p * &sys.a - correction),
    ))
}

fn gain_from_value(sys: &StateSpaceSystem, cost: &CostSpec, p: &Mat) -> Result<Controller> {
    let btp = sys.b.transpose() * p;
    let g = symmetrize(&(&cost.r + &btp * &sys.b));
    let h = btp * &sys.a;
    let chol = g.cholesky().ok_or(Error::NotStabilizable)?;
    Ok(Controller::new(-chol.solve(&h)))
}

// `|new - old|_F / |new|_F`.
fn relative_change(new: &Mat, old: &Mat) -> f64 {
    let scale = linalg::frobenius(new);
    if scale == 0.0 {
        return if old.amax() == 0.0 { 0.0 } else { f64::INFINITY };
    }
    linalg::frobenius(&(new - old)) / scale
}

/// Optimal value matrix and gain from the fixed-point Riccati iteration started
/// at `P = Q`, followed by policy-iteration polishing of the gain.
pub fn solve_dare_optimal(
    sys: &StateSpaceSystem,
    cost: &CostSpec,
    tol: f64,
) -> Result<(ValueMatrix, Controller)> {
    cost.check_against(sys)?;
    let mut p = symmetrize(&cost.q);
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < DARE_MAX_ITERS {
        let next = riccati_step(sys, cost, &p)?;
        iterations += 1;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonConvergence {
                what: "riccati iteration",
                iterations,
                residual: f64::INFINITY,
            });
        }
        residual = relative_change(&next, &p);
        p = next;
        if residual <= tol {
            break;
        }
    }
    if residual > tol {
        return Err(Error::NonConvergence {
            what: "riccati iteration",
            iterations,
            residual,
        });
    }

    let mut k = gain_from_value(sys, cost, &p)?;
    if !is_stabilizing(&k, sys, DEFAULT_MARGIN)? {
        return Err(Error::NotStabilizable);
    }
    // Policy iteration is quadratically convergent from here; a couple of steps
    // bring the gain to the accuracy of the Lyapunov solver.
    let mut value = solve_lyapunov_value(sys, cost, &k, DEFAULT_TOL)?;
    for _ in 0..3 {
        let refined = gain_from_value(sys, cost, &value.p)?;
        let change = (&refined.gain - &k.gain).norm();
        if !is_stabilizing(&refined, sys, DEFAULT_MARGIN)? {
            break;
        }
        let refined_value = solve_lyapunov_value(sys, cost, &refined, DEFAULT_TOL)?;
        k = refined;
        value = refined_value;
        if change <= f64::EPSILON * k.gain.norm().max(1.0) {
            break;
        }
    }
    Ok((value, k))
}

/// Trace of exact gradient descent.
#[derive(Debug, Clone)]
pub struct DescentTrace {
    /// `(K, J(K))` for the initial gain and every accepted step.
    pub iterates: Vec<(Controller, f64)>,
    pub converged: bool,
    pub final_gradient_norm: f64,
}

impl DescentTrace {
    pub fn final_gain(&self) -> &Controller {
        &self.iterates.last().expect("trace holds the initial gain").0
    }

    pub fn steps(&self) -> usize {
        self.iterates.len() - 1
    }
}

/// `K ← K - α ∇J(K)` until `|∇J|_F <= tol` or `max_iters` steps.
pub fn policy_gradient_descent(
    sys: &StateSpaceSystem,
    cost: &CostSpec,
    k0: &Controller,
    step: f64,
    max_iters: usize,
    tol: f64,
) -> Result<DescentTrace> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidParameter(format!("step size must be positive, got {step}")));
    }
    cost.check_against(sys)?;
    stable_closed_loop(sys, k0)?;
    let mut k = k0.clone();
    let mut iterates = vec![(k.clone(), lqr_cost(sys, cost, &k)?)];
    let mut grad_norm = f64::INFINITY;
    for iteration in 0..=max_iters {
        let grad = exact_policy_gradient(sys, cost, &k)?;
        grad_norm = grad.norm();
        if grad_norm <= tol {
            return Ok(DescentTrace {
                iterates,
                converged: true,
                final_gradient_norm: grad_norm,
            });
        }
        if iteration == max_iters {
            break;
        }
        k = Controller::new(&k.gain - grad * step);
        if !is_stabilizing(&k, sys, DEFAULT_MARGIN)? {
            return Err(Error::StepLeftStabilizingSet {
                iteration: iteration + 1,
            });
        }
        let j = lqr_cost(sys, cost, &k)?;
        iterates.push((k.clone(), j));
    }
    Ok(DescentTrace {
        iterates,
        converged: false,
        final_gradient_norm: grad_norm,
    })
}

/// Step size `1 / (4 λmax(R + BᵀP_{K0}B) λmax(Γ_{K0}))`.
///
/// At the optimum the Hessian of `J` is `E ↦ 2(R + BᵀP B) E Γ`, so this is half
/// the inverse curvature bound evaluated at the starting gain.
pub fn suggested_step_size(sys: &StateSpaceSystem, cost: &CostSpec, k0: &Controller) -> Result<f64> {
    let p = solve_lyapunov_value(sys, cost, k0, DEFAULT_TOL)?;
    let gamma = closed_loop_gramian(sys, k0, DEFAULT_TOL)?;
    let curvature = symmetrize(&(&cost.r + sys.b.transpose() * &p.p * &sys.b))
        .symmetric_eigenvalues()
        .max()
        * gamma.gamma.symmetric_eigenvalues().max();
    if !(curvature > 0.0) {
        return Err(Error::InvalidParameter("degenerate curvature at K0".into()));
    }
    Ok(0.25 / curvature)
}
