#![allow(dead_code)]

use pg_limits::random::{random_cost, random_stable_system};
use pg_limits::{Controller, CostSpec, Mat, StateSpaceSystem};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn instance(seed: u64, dx: usize, du: usize) -> (StateSpaceSystem, CostSpec) {
    let mut r = rng(seed);
    let sys = random_stable_system(&mut r, dx, du, 0.1, 0.9);
    let cost = random_cost(&mut r, dx, du);
    (sys, cost)
}

/// `Σ_{t>=0} A^t Q (Aᵀ)^t` by direct summation.
pub fn stein_series(a: &Mat, q: &Mat) -> Mat {
    let mut term = q.clone();
    let mut sum = q.clone();
    for _ in 0..100_000 {
        term = a * &term * a.transpose();
        sum += &term;
        if term.amax() <= 1e-18 * sum.amax() {
            break;
        }
    }
    sum
}

/// Central differences of `f` at every entry of `k` with step `h`.
pub fn central_difference(k: &Controller, h: f64, f: impl Fn(&Controller) -> f64) -> Mat {
    let mut g = Mat::zeros(k.gain.nrows(), k.gain.ncols());
    for i in 0..k.gain.nrows() {
        for j in 0..k.gain.ncols() {
            let mut plus = k.gain.clone();
            let mut minus = k.gain.clone();
            plus[(i, j)] += h;
            minus[(i, j)] -= h;
            g[(i, j)] = (f(&Controller::new(plus)) - f(&Controller::new(minus))) / (2.0 * h);
        }
    }
    g
}

pub fn rel_err(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
