//! The almost scalar output-feedback system
//! `x' = a x + [b 0] u + w`, `y = c x + v`, with `Q = Σ_V = Σ_W = 1` and `R = I₂`.

use serde::{Deserialize, Serialize};

use super::OutputSystem;
use crate::error::{Error, Result};
use crate::hard_instances::{
    assemble, scalar_lqr, ExperimentBudget, LowerBoundCertificate, Perturbation,
};
use crate::lqr::{Controller, CostSpec};
use crate::Mat;

pub fn make_almost_scalar_po(a: f64, b: f64, c: f64) -> Result<(OutputSystem, CostSpec)> {
    let one = Mat::from_element(1, 1, 1.0);
    let g = OutputSystem::new(
        Mat::from_element(1, 1, a),
        Mat::from_row_slice(1, 2, &[b, 0.0]),
        Mat::from_element(1, 1, c),
        one.clone(),
        one.clone(),
    )?;
    Ok((g, CostSpec::identity(1, 2)))
}

/// Closed-form steady-state quantities of the almost scalar system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarPoQuantities {
    pub p: f64,
    pub k: f64,
    pub closed_loop: f64,
    /// Positive root of `c²(2-a²)F² + (1-a²-c²)F - 1 = 0`.
    pub f: f64,
    pub l: f64,
    /// `F²c² / (c²F + 1)`.
    pub sigma_nu: f64,
    /// `Σ_ν / (1 - (a+bk)²)`.
    pub gamma_nu: f64,
}

pub fn scalar_po_quantities(a: f64, b: f64, c: f64) -> Result<ScalarPoQuantities> {
    let opt = scalar_lqr(a, b, 1.0, 1.0, 1.0)?;
    let c2 = c * c;
    let alpha = c2 * (2.0 - a * a);
    let beta = 1.0 - a * a - c2;
    let f = if alpha == 0.0 && beta > 0.0 {
        1.0 / beta
    } else if alpha > 0.0 {
        let disc = (beta * beta + 4.0 * alpha).sqrt();
        if beta >= 0.0 {
            2.0 / (beta + disc)
        } else {
            (disc - beta) / (2.0 * alpha)
        }
    } else {
        return Err(Error::NonConvergence {
            what: "filter riccati iteration",
            iterations: 0,
            residual: f64::INFINITY,
        });
    };
    let l = f * c / (c2 * f + 1.0);
    let sigma_nu = f * f * c2 / (c2 * f + 1.0);
    let gamma_nu = sigma_nu / (1.0 - opt.closed_loop * opt.closed_loop);
    Ok(ScalarPoQuantities {
        p: opt.p,
        k: opt.k,
        closed_loop: opt.closed_loop,
        f,
        l,
        sigma_nu,
        gamma_nu,
    })
}

/// Certificate for the almost scalar system with `Δ² = 1/(NTβ)` on the dead
/// input column, under budget-normalized exploration on the filter reduction.
///
/// `K⋆ = [k⋆, 0]` annihilates `[0, Δ]`, so the exact KL is `NT Δ² s / (2Σ_ν)` with
/// `s` the excitation variance. `rate_quantity` holds `P⋆(a+bk⋆)Γ_ν / (2√(NTβ))`.
pub fn scalar_po_bound(a: f64, b: f64, c: f64, budget: &ExperimentBudget) -> Result<LowerBoundCertificate> {
    let q = scalar_po_quantities(a, b, c)?;
    let nt = budget.total_steps();
    let beta = budget.beta;
    let delta = 1.0 / (nt * beta).sqrt();

    let stationary = 1.0 - q.closed_loop * q.closed_loop;
    let k2 = q.k * q.k;
    let excitation = ((beta - k2 * q.gamma_nu) / (k2 * b * b / stationary + 2.0)).max(0.0);
    let kl = if excitation == 0.0 {
        0.0
    } else if q.sigma_nu > 0.0 {
        nt * delta * delta * excitation / (2.0 * q.sigma_nu)
    } else {
        return Err(Error::SingularNoise);
    };

    let gap_factor = (q.p * q.closed_loop * q.gamma_nu).abs();
    let mut cert = assemble(
        2.0 * delta * gap_factor,
        kl,
        Perturbation::new(Mat::from_row_slice(1, 2, &[0.0, delta])),
        &Controller::new(Mat::from_column_slice(2, 1, &[q.k, 0.0])),
        &Mat::from_element(1, 1, q.p),
        &Mat::from_element(1, 1, q.gamma_nu),
        &(Mat::identity(2, 2) * excitation),
    );
    cert.kl_upper_bound = Some(0.5 * delta * delta * nt * beta);
    cert.rate_quantity = Some(gap_factor / (2.0 * (nt * beta).sqrt()));
    Ok(cert)
}

/// One point of the Markov-parameter sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkovRow {
    pub m: f64,
    pub b: f64,
    pub c: f64,
    /// `P⋆(a+bk⋆)Γ_ν / (2√(NTβ))`.
    pub closed_form_bound: f64,
    /// Certificate value with the exact KL.
    pub bound_value: f64,
    pub kl_value: f64,
    pub vacuous: bool,
}

/// Evaluates [`scalar_po_bound`] at `b = √m·s`, `c = √m/s` for each `m`.
pub fn markov_parameter_sweep(
    a: f64,
    m_grid: &[f64],
    representation: f64,
    budget: &ExperimentBudget,
) -> Result<Vec<MarkovRow>> {
    if m_grid.is_empty() {
        return Err(Error::InvalidParameter("markov sweep needs a nonempty grid".into()));
    }
    if !(representation > 0.0 && representation.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "representation scale must be positive, got {representation}"
        )));
    }
    m_grid
        .iter()
        .map(|&m| {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "markov parameter must be positive, got {m}"
                )));
            }
            let b = m.sqrt() * representation;
            let c = m.sqrt() / representation;
            let cert = scalar_po_bound(a, b, c, budget)?;
            Ok(MarkovRow {
                m,
                b,
                c,
                closed_form_bound: cert.rate_quantity.unwrap_or(f64::NAN),
                bound_value: cert.bound_value,
                kl_value: cert.kl_value,
                vacuous: cert.vacuous,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partial_obs::{steady_state_filter, FILTER_MAX_ITERS};
    use approx::assert_relative_eq;

    #[test]
    fn closed_form_filter_matches_iteration() {
        for &(a, c) in &[(0.0, 1.0), (0.9, 1.0), (0.5, 0.1), (1.2, 3.0), (-0.7, 0.4)] {
            let (g, _) = make_almost_scalar_po(a, 1.0, c).unwrap();
            let it = steady_state_filter(&g, 1e-14, FILTER_MAX_ITERS).unwrap();
            let q = scalar_po_quantities(a, 1.0, c).unwrap();
            assert_relative_eq!(it.f[(0, 0)], q.f, max_relative = 1e-11);
            assert_relative_eq!(it.l[(0, 0)], q.l, max_relative = 1e-11);
            assert_relative_eq!(it.sigma_nu[(0, 0)], q.sigma_nu, max_relative = 1e-11);
        }
    }

    #[test]
    fn no_filter_steady_state_for_large_a() {
        assert!(scalar_po_quantities(1.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn zero_dynamics_gives_zero_bound() {
        let budget = ExperimentBudget::from_total(1_000_000, 1.0).unwrap();
        let rows = markov_parameter_sweep(0.0, &[0.5], 1.0, &budget).unwrap();
        assert_eq!(rows[0].closed_form_bound, 0.0);
        assert_eq!(rows[0].bound_value, 0.0);
        assert!(markov_parameter_sweep(0.9, &[], 1.0, &budget).is_err());
        assert!(markov_parameter_sweep(0.9, &[0.0], 1.0, &budget).is_err());
    }

    #[test]
    fn finite_positive_bound_at_reference_point() {
        let budget = ExperimentBudget::from_total(1_000_000, 1.0).unwrap();
        let c = scalar_po_bound(0.9, 1.0, 1.0, &budget).unwrap();
        assert!(c.rate_quantity.unwrap() > 0.0 && c.rate_quantity.unwrap().is_finite());
        assert!(c.bound_value > 0.0);
    }
}
