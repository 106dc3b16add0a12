//! Brute-force KL divergence between two linear systems from simulated data.

use rayon::prelude::*;

use super::{stream_rng, GaussianSampler};
use crate::error::{dim_err, Error, Result};
use crate::hard_instances::ExplorationPolicy;
use crate::linalg::{check_shape, check_square, symmetrize};
use crate::lqr::StateSpaceSystem;
use crate::{Mat, Vector};

/// Mean and standard error over `reps` datasets (each `N` trajectories of length
/// `T` generated by `S1`) of the log-likelihood ratio `log dP₁/dP₂`. Replicate `r`
/// uses `stream_rng(seed, r)`. Input densities are shared by both models and
/// cancel.
pub fn monte_carlo_kl(
    s1: &StateSpaceSystem,
    s2: &StateSpaceSystem,
    policy: &ExplorationPolicy,
    n: usize,
    t: usize,
    reps: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let dx = s1.state_dim();
    let du = s1.input_dim();
    if s2.a.shape() != (dx, dx) || s2.b.shape() != (dx, du) {
        return Err(dim_err("systems must have the same dimensions"));
    }
    check_shape(&policy.feedback_gain.gain, du, dx, "K")?;
    check_square(&policy.excitation_cov, du, "excitation covariance")?;
    if reps < 2 {
        return Err(Error::InvalidParameter("monte carlo KL needs reps >= 2".into()));
    }
    let chol = symmetrize(&s1.sigma_w)
        .cholesky()
        .ok_or(Error::SingularNoise)?;
    // |W e|² = eᵀ Σ_W⁻¹ e.
    let whiten = chol
        .l()
        .solve_lower_triangular(&Mat::identity(dx, dx))
        .ok_or(Error::SingularNoise)?;
    let d_a = &s2.a - &s1.a;
    let d_b = &s2.b - &s1.b;
    let k = &policy.feedback_gain.gain;

    let llrs: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r);
            let mut eta_sampler = GaussianSampler::new(&policy.excitation_cov);
            let mut w_sampler = GaussianSampler::new(&s1.sigma_w);
            let mut x = Vector::zeros(dx);
            let mut u = Vector::zeros(du);
            let mut w = Vector::zeros(dx);
            let mut e2 = Vector::zeros(dx);
            let mut white1 = Vector::zeros(dx);
            let mut white2 = Vector::zeros(dx);
            let mut next = Vector::zeros(dx);
            let mut llr = 0.0;
            for _ in 0..n {
                x.fill(0.0);
                for _ in 0..t {
                    eta_sampler.sample_into(&mut rng, &mut u);
                    u.gemv(1.0, k, &x, 1.0);
                    w_sampler.sample_into(&mut rng, &mut w);
                    // Residual under S2: x' - A₂x - B₂u = w - (A₂-A₁)x - (B₂-B₁)u.
                    e2.copy_from(&w);
                    e2.gemv(-1.0, &d_a, &x, 1.0);
                    e2.gemv(-1.0, &d_b, &u, 1.0);
                    white1.gemv(1.0, &whiten, &w, 0.0);
                    white2.gemv(1.0, &whiten, &e2, 0.0);
                    llr += 0.5 * (white2.norm_squared() - white1.norm_squared());
                    next.copy_from(&w);
                    next.gemv(1.0, &s1.a, &x, 1.0);
                    next.gemv(1.0, &s1.b, &u, 1.0);
                    std::mem::swap(&mut x, &mut next);
                }
            }
            llr
        })
        .collect();

    let m = reps as f64;
    let mean = llrs.iter().sum::<f64>() / m;
    let var = llrs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    Ok((mean, (var / m).sqrt()))
}
