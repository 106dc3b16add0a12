//! Random test instances. Used by the property tests, the acceptance suite and
//! the CLI's instance generator.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::linalg::{spectral_radius, symmetrize};
use crate::lqr::{CostSpec, StateSpaceSystem};
use crate::Mat;

/// Matrix with i.i.d. standard normal entries.
pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// `M Mᵀ / n + floor·I` for a Gaussian `M`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, n: usize, floor: f64) -> Mat {
    let m = gaussian_matrix(rng, n, n);
    symmetrize(&(&m * m.transpose())) / n as f64 + Mat::identity(n, n) * floor
}

/// Open-loop stable system with `ρ(A)` drawn uniformly from `[rho_min, rho_max]`,
/// Gaussian `B` and a well-conditioned random `Σ_W`.
pub fn random_stable_system<R: Rng + ?Sized>(
    rng: &mut R,
    state_dim: usize,
    input_dim: usize,
    rho_min: f64,
    rho_max: f64,
) -> StateSpaceSystem {
    let target = Uniform::new_inclusive(rho_min, rho_max)
        .expect("valid radius range")
        .sample(rng);
    let a = loop {
        let a = gaussian_matrix(rng, state_dim, state_dim);
        let rho = spectral_radius(&a).unwrap_or(0.0);
        if rho > 1e-3 {
            break a * (target / rho);
        }
    };
    let b = gaussian_matrix(rng, state_dim, input_dim);
    let sigma_w = random_spd(rng, state_dim, 0.2);
    StateSpaceSystem { a, b, sigma_w }
}

pub fn random_cost<R: Rng + ?Sized>(rng: &mut R, state_dim: usize, input_dim: usize) -> CostSpec {
    CostSpec {
        q: random_spd(rng, state_dim, 0.2),
        r: random_spd(rng, input_dim, 0.5),
    }
}

/// Random dimensions `(d_x, d_u)` with `1 <= d_x <= max_state`, `1 <= d_u <= max_input`.
pub fn random_dims<R: Rng + ?Sized>(rng: &mut R, max_state: usize, max_input: usize) -> (usize, usize) {
    (rng.random_range(1..=max_state), rng.random_range(1..=max_input))
}
