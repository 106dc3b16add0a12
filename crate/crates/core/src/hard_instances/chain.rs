//! Integrator-chain family whose Riccati solution grows like `4^{d_x}`.

use serde::{Deserialize, Serialize};

use super::{corollary_nullspace_bound, ExperimentBudget, LowerBoundCertificate, Perturbation};
use crate::error::{Error, Result};
use crate::linalg::top_left_singular;
use crate::lqr::{solve_dare_optimal, CostSpec, StateSpaceSystem, DARE_TOL};
use crate::{Mat, Vector};

/// Decoupled system: a memoryless first state driven by input 1, and a
/// `(d_x - 1)`-dimensional chain (`ρ` on the diagonal, `2` on the superdiagonal)
/// driven at its last state by input 2.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorChain {
    pub system: StateSpaceSystem,
    pub cost: CostSpec,
    /// The chain alone: `(A0, B0, Σ_W = I)`.
    pub subsystem: StateSpaceSystem,
    /// `(Q0, R0) = (I, 1)`.
    pub subsystem_cost: CostSpec,
}

impl IntegratorChain {
    pub fn state_dim(&self) -> usize {
        self.system.state_dim()
    }

    /// `Δ = [[0, 0], [Δ₁, 0]]`: couples the chain into the first input column.
    pub fn perturbation(&self, delta1: &Vector) -> Result<Perturbation> {
        let n = self.state_dim();
        if delta1.len() != n - 1 {
            return Err(Error::Dimension(format!(
                "Delta1 must have length {}, got {}",
                n - 1,
                delta1.len()
            )));
        }
        let mut delta = Mat::zeros(n, 2);
        delta.view_mut((1, 0), (n - 1, 1)).copy_from(delta1);
        Ok(Perturbation::new(delta))
    }
}

pub fn make_integrator_chain(state_dim: usize, rho: f64) -> Result<IntegratorChain> {
    if state_dim < 3 {
        return Err(Error::InvalidParameter(format!(
            "integrator chain needs d_x >= 3, got {state_dim}"
        )));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "integrator chain needs 0 < rho < 1, got {rho}"
        )));
    }
    let n = state_dim;
    let a = Mat::from_fn(n, n, |i, j| {
        if i == 0 || j == 0 {
            0.0
        } else if i == j {
            rho
        } else if j == i + 1 {
            2.0
        } else {
            0.0
        }
    });
    let mut b = Mat::zeros(n, 2);
    b[(0, 0)] = 1.0;
    b[(n - 1, 1)] = 1.0;
    let a0 = a.view((1, 1), (n - 1, n - 1)).into_owned();
    let mut b0 = Mat::zeros(n - 1, 1);
    b0[(n - 2, 0)] = 1.0;
    Ok(IntegratorChain {
        system: StateSpaceSystem {
            a,
            b,
            sigma_w: Mat::identity(n, n),
        },
        cost: CostSpec::identity(n, 2),
        subsystem: StateSpaceSystem {
            a: a0,
            b: b0,
            sigma_w: Mat::identity(n - 1, n - 1),
        },
        subsystem_cost: CostSpec::identity(n - 1, 1),
    })
}

/// `2^{2d_x - 4} + 1`.
pub fn lemma5_floor(state_dim: usize) -> f64 {
    2f64.powi(2 * state_dim as i32 - 4) + 1.0
}

/// `B0ᵀ P0⋆ B0 + R0` for the chain subsystem.
pub fn riccati_growth_check(state_dim: usize, rho: f64) -> Result<f64> {
    let chain = make_integrator_chain(state_dim, rho)?;
    let (p, _) = solve_dare_optimal(&chain.subsystem, &chain.subsystem_cost, DARE_TOL)?;
    let sub = &chain.subsystem;
    Ok((sub.b.transpose() * &p.p * &sub.b)[(0, 0)] + chain.subsystem_cost.r[(0, 0)])
}

/// `‖Δ₁ᵀ P0 (A0 + B0 K0⋆)‖` at the maximizing unit `Δ₁`, next to `B0ᵀP0B0 + R0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma4Check {
    pub delta1: Vec<f64>,
    pub lhs: f64,
    pub riccati_term: f64,
}

impl Lemma4Check {
    pub fn ratio(&self) -> f64 {
        self.lhs / self.riccati_term
    }
}

pub fn lemma4_check(state_dim: usize, rho: f64) -> Result<Lemma4Check> {
    let chain = make_integrator_chain(state_dim, rho)?;
    lemma4_for(&chain)
}

fn lemma4_for(chain: &IntegratorChain) -> Result<Lemma4Check> {
    let sub = &chain.subsystem;
    let (p, k) = solve_dare_optimal(sub, &chain.subsystem_cost, DARE_TOL)?;
    let acl = sub.closed_loop(&k)?;
    let (lhs, u) = top_left_singular(&(&p.p * acl));
    let riccati_term = (sub.b.transpose() * &p.p * &sub.b)[(0, 0)] + chain.subsystem_cost.r[(0, 0)];
    Ok(Lemma4Check {
        delta1: u.iter().copied().collect(),
        lhs,
        riccati_term,
    })
}

/// Nullspace certificate on the chain with the Lemma-4 direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurseCertificate {
    pub certificate: LowerBoundCertificate,
    pub lemma4: Lemma4Check,
}

pub fn dimension_curse_bound(
    state_dim: usize,
    rho: f64,
    budget: &ExperimentBudget,
) -> Result<CurseCertificate> {
    let chain = make_integrator_chain(state_dim, rho)?;
    let lemma4 = lemma4_for(&chain)?;
    let delta = chain.perturbation(&Vector::from_column_slice(&lemma4.delta1))?;
    let certificate = corollary_nullspace_bound(&chain.system, &chain.cost, budget, &delta)?;
    Ok(CurseCertificate {
        certificate,
        lemma4,
    })
}
