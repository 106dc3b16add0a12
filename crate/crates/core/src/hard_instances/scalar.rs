//! Closed forms for the scalar system `x' = a x + b u + w`.

use serde::{Deserialize, Serialize};

use super::{assemble, ExperimentBudget, LowerBoundCertificate, Perturbation};
use crate::error::{Error, Result};
use crate::lqr::Controller;
use crate::Mat;

/// Scalar optimal-control quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarLqr {
    pub p: f64,
    pub k: f64,
    pub closed_loop: f64,
    /// Stationary state variance `σ² / (1 - (a+bk)²)`.
    pub gamma: f64,
}

/// Positive root of `b²p² + (r(1-a²) - qb²)p - qr = 0` and the optimal gain.
pub fn scalar_lqr(a: f64, b: f64, q: f64, r: f64, noise_var: f64) -> Result<ScalarLqr> {
    if !(r > 0.0) || q < 0.0 || noise_var < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "scalar LQR needs q >= 0, r > 0, noise variance >= 0 (got q={q}, r={r}, var={noise_var})"
        )));
    }
    if b == 0.0 && a.abs() >= 1.0 {
        return Err(Error::NotStabilizable);
    }
    let beta = r * (1.0 - a * a) - q * b * b;
    let disc = (beta * beta + 4.0 * b * b * q * r).sqrt();
    let p = if beta > 0.0 {
        2.0 * q * r / (beta + disc)
    } else {
        (disc - beta) / (2.0 * b * b)
    };
    let k = -a * b * p / (r + b * b * p);
    let closed_loop = a + b * k;
    let gamma = noise_var / (1.0 - closed_loop * closed_loop);
    Ok(ScalarLqr {
        p,
        k,
        closed_loop,
        gamma,
    })
}

/// Scalar certificate with `Δ² = 1 / (2NT(Γ⋆ + β))`, under budget-normalized
/// exploration around `k⋆`.
///
/// Under `u = k⋆x + η` the perturbed pair differs only through `Δη`, so the exact
/// KL is `NT Δ² s / (2σ²)` with `s` the excitation variance.
pub fn scalar_lower_bound(
    a: f64,
    b: f64,
    q: f64,
    r: f64,
    noise_var: f64,
    budget: &ExperimentBudget,
) -> Result<LowerBoundCertificate> {
    let opt = scalar_lqr(a, b, q, r, noise_var)?;
    if !(noise_var > 0.0) {
        return Err(Error::SingularNoise);
    }
    let nt = budget.total_steps();
    let beta = budget.beta;
    let delta = 1.0 / (2.0 * nt * (opt.gamma + beta)).sqrt();

    let k2 = opt.k * opt.k;
    let stationary = 1.0 - opt.closed_loop * opt.closed_loop;
    let excitation = ((beta - k2 * opt.gamma) / (k2 * b * b / stationary + 1.0)).max(0.0);
    let kl = nt * delta * delta * excitation / (2.0 * noise_var);

    let gap_factor = (opt.p * opt.closed_loop * opt.gamma).abs();
    let mut cert = assemble(
        2.0 * delta * gap_factor,
        kl,
        Perturbation::new(Mat::from_element(1, 1, delta)),
        &Controller::scalar(opt.k),
        &Mat::from_element(1, 1, opt.p),
        &Mat::from_element(1, 1, opt.gamma),
        &Mat::from_element(1, 1, excitation),
    );
    cert.kl_upper_bound = Some(delta * delta * nt * (opt.gamma + beta));
    cert.rate_quantity = Some(gap_factor / (nt * (beta + opt.gamma)).sqrt());
    Ok(cert)
}

/// One gain evaluated on `(a, b)` and `(a, -b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSystemRow {
    pub k: f64,
    pub closed_loop_1: f64,
    pub closed_loop_2: f64,
    /// `J` with `q = r = σ² = 1`, or `+∞` when `k` does not stabilize.
    pub cost_1: f64,
    pub cost_2: f64,
}

/// Evaluates each gain on `S1 = (a, b)` and `S2 = (a, -b)`. For `|a| > 1` no gain
/// stabilizes both, so every row has at least one infinite cost.
pub fn two_scalar_demo(a: f64, b: f64, k_grid: &[f64]) -> Result<Vec<TwoSystemRow>> {
    if !(a.abs() > 1.0) || b == 0.0 {
        return Err(Error::InvalidParameter(format!(
            "two-system demo needs |a| > 1 and b != 0, got a={a}, b={b}"
        )));
    }
    let cost = |acl: f64, k: f64| {
        if acl.abs() < 1.0 {
            (1.0 + k * k) / (1.0 - acl * acl)
        } else {
            f64::INFINITY
        }
    };
    Ok(k_grid
        .iter()
        .map(|&k| {
            let c1 = a + b * k;
            let c2 = a - b * k;
            TwoSystemRow {
                k,
                closed_loop_1: c1,
                closed_loop_2: c2,
                cost_1: cost(c1, k),
                cost_2: cost(c2, k),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn golden_closed_forms() {
        let s = scalar_lqr(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(s.p, (1.0 + 5f64.sqrt()) / 2.0, epsilon = 1e-14);
        assert_relative_eq!(s.k, -(5f64.sqrt() - 1.0) / 2.0, epsilon = 1e-14);
        assert_relative_eq!(s.closed_loop, (3.0 - 5f64.sqrt()) / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn closed_form_covers_both_branches() {
        // beta > 0 (stable, cheap control) and beta < 0 (unstable).
        for &(a, b) in &[(0.5, 0.3), (2.0, 0.7), (1.0, 0.01), (-1.5, 2.0)] {
            let s = scalar_lqr(a, b, 1.3, 0.7, 1.0).unwrap();
            let residual = s.p - 1.3 - a * a * s.p + a * a * b * b * s.p * s.p / (0.7 + b * b * s.p);
            assert!(residual.abs() <= 1e-12 * s.p.max(1.0), "a={a} b={b} residual={residual}");
            assert!(s.closed_loop.abs() < 1.0);
        }
        assert!(matches!(scalar_lqr(1.0, 0.0, 1.0, 1.0, 1.0), Err(Error::NotStabilizable)));
        assert_relative_eq!(scalar_lqr(0.5, 0.0, 1.0, 1.0, 1.0).unwrap().p, 4.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn a_zero_gives_zero_gain_and_gap() {
        let budget = ExperimentBudget::from_total(10_000, 1.0).unwrap();
        let c = scalar_lower_bound(0.0, 1.0, 1.0, 1.0, 1.0, &budget).unwrap();
        assert_eq!(c.k_star[(0, 0)], 0.0);
        assert_eq!(c.bound_value, 0.0);
    }

    #[test]
    fn kl_upper_bound_is_one_half() {
        let budget = ExperimentBudget::from_total(10_000, 1.0).unwrap();
        let c = scalar_lower_bound(1.0, 1.0, 1.0, 1.0, 1.0, &budget).unwrap();
        assert_relative_eq!(c.kl_upper_bound.unwrap(), 0.5, epsilon = 1e-14);
        assert!(c.kl_value <= 0.5);
        assert_relative_eq!(c.delta_used.delta[(0, 0)], 4.799e-3, epsilon = 1e-6);
    }

    #[test]
    fn two_systems_never_both_stable() {
        let grid: Vec<f64> = (-400..=400).map(|i| i as f64 / 100.0).collect();
        let rows = two_scalar_demo(1.5, 1.0, &grid).unwrap();
        assert!(rows.iter().all(|r| r.cost_1.is_infinite() || r.cost_2.is_infinite()));
        let row = two_scalar_demo(1.5, 1.0, &[-1.0, 1.0]).unwrap();
        assert_relative_eq!(row[0].closed_loop_1, 0.5);
        assert!(row[0].cost_1.is_finite() && row[0].cost_2.is_infinite());
        assert!(row[1].cost_1.is_infinite() && row[1].cost_2.is_finite());
        assert!(two_scalar_demo(0.5, 1.0, &grid).is_err());
    }
}
