//! Seeded simulation and gradient estimators.
//!
//! Every independent unit of work (a trajectory, a perturbation sample, a KL
//! replicate) draws from its own ChaCha8 stream, `stream_rng(seed, index)`. Work is
//! spread over the current rayon pool and collected by index, and all reductions
//! are sequential sums in index order, so results do not depend on the number of
//! worker threads.

mod estimators;
mod figure1;
mod kl;

pub use estimators::{
    least_squares_identify, plugin_gradient_estimator, zeroth_order_gradient_estimator, CostOracle,
    EstimateMeta, EstimatorMethod, GradientEstimate, Identification, DEFAULT_RIDGE_PER_SAMPLE,
};
pub use figure1::{figure1_experiment, Figure1Config, Figure1Result, Figure1Row};
pub use kl::monte_carlo_kl;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result};
use crate::hard_instances::ExplorationPolicy;
use crate::linalg::{check_shape, check_square, symmetrize};
use crate::lqr::StateSpaceSystem;
use crate::partial_obs::{DynamicController, OutputSystem};
use crate::{Mat, Vector};

/// Default relative slack of [`budget_report`].
pub const BUDGET_SLACK: f64 = 0.05;

/// The RNG for work unit `index` of an experiment seeded with `seed`: ChaCha8 keyed
/// by `seed`, on stream `index`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Seed for a named sub-experiment (splitmix64 of `seed + label`).
pub fn sub_seed(seed: u64, label: u64) -> u64 {
    let mut z = seed.wrapping_add(label.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sampler for `N(0, Σ)` as `F z` with `FFᵀ = Σ` and `z` standard normal.
#[derive(Debug, Clone)]
pub(crate) struct GaussianSampler {
    factor: Option<Mat>,
    z: Vector,
}

impl GaussianSampler {
    /// Cholesky factor when `Σ` is positive definite, otherwise the symmetric square
    /// root with negative eigenvalues clamped to zero.
    pub(crate) fn new(cov: &Mat) -> Self {
        let n = cov.nrows();
        let cov = symmetrize(cov);
        let factor = if cov.iter().all(|&v| v == 0.0) {
            None
        } else if let Some(chol) = cov.clone().cholesky() {
            Some(chol.l())
        } else {
            let eig = cov.symmetric_eigen();
            let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
            Some(&eig.eigenvectors * Mat::from_diagonal(&roots))
        };
        Self {
            factor,
            z: Vector::zeros(n),
        }
    }

    /// Writes a draw into `out`. A zero covariance writes zeros and draws nothing.
    pub(crate) fn sample_into<R: rand::Rng + ?Sized>(&mut self, rng: &mut R, out: &mut Vector) {
        match &self.factor {
            None => out.fill(0.0),
            Some(f) => {
                for v in self.z.iter_mut() {
                    *v = StandardNormal.sample(rng);
                }
                out.gemv(1.0, f, &self.z, 0.0);
            }
        }
    }
}

/// One experiment `x_0 = 0, x_1, ..., x_T` with inputs `u_0, ..., u_{T-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    /// `y_0, ..., y_T` for output-feedback experiments.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub outputs: Option<Vec<Vec<f64>>>,
    /// Controller states `ξ_0, ..., ξ_T` for output-feedback experiments.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub controller_states: Option<Vec<Vec<f64>>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_energy(&self) -> f64 {
        self.inputs
            .iter()
            .map(|u| u.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }
}

/// How the inputs of a dataset were generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyDescriptor {
    Exploration(ExplorationPolicy),
    Dynamic(DynamicController),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentDataset {
    pub trajectories: Vec<Trajectory>,
    pub seed: u64,
    pub policy: PolicyDescriptor,
    /// `Σ_{n,t} u_{t,n}ᵀ u_{t,n}`.
    pub realized_input_energy: f64,
}

impl ExperimentDataset {
    fn assemble(trajectories: Vec<Trajectory>, seed: u64, policy: PolicyDescriptor) -> Self {
        let realized_input_energy = trajectories.iter().map(Trajectory::input_energy).sum();
        Self {
            trajectories,
            seed,
            policy,
            realized_input_energy,
        }
    }

    /// `Σ_n T_n`.
    pub fn total_steps(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }
}

fn to_vec(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

/// `N` trajectories of `x' = Ax + Bu + w` under `u = Kx + η`. Trajectory `n` uses
/// `stream_rng(seed, n)`, drawing `η_t` then `w_t` at each step. Unstable closed
/// loops are simulated as is.
pub fn simulate_trajectories(
    sys: &StateSpaceSystem,
    policy: &ExplorationPolicy,
    n: usize,
    t: usize,
    seed: u64,
) -> Result<ExperimentDataset> {
    let dx = sys.state_dim();
    let du = sys.input_dim();
    check_shape(&policy.feedback_gain.gain, du, dx, "K")?;
    check_square(&policy.excitation_cov, du, "excitation covariance")?;
    let trajectories = (0..n as u64)
        .into_par_iter()
        .map(|index| {
            let mut rng = stream_rng(seed, index);
            let mut eta_sampler = GaussianSampler::new(&policy.excitation_cov);
            let mut w_sampler = GaussianSampler::new(&sys.sigma_w);
            let mut x = Vector::zeros(dx);
            let mut u = Vector::zeros(du);
            let mut w = Vector::zeros(dx);
            let mut next = Vector::zeros(dx);
            let mut states = Vec::with_capacity(t + 1);
            let mut inputs = Vec::with_capacity(t);
            states.push(to_vec(&x));
            for _ in 0..t {
                eta_sampler.sample_into(&mut rng, &mut u);
                u.gemv(1.0, &policy.feedback_gain.gain, &x, 1.0);
                w_sampler.sample_into(&mut rng, &mut w);
                next.copy_from(&w);
                next.gemv(1.0, &sys.a, &x, 1.0);
                next.gemv(1.0, &sys.b, &u, 1.0);
                std::mem::swap(&mut x, &mut next);
                inputs.push(to_vec(&u));
                states.push(to_vec(&x));
            }
            Trajectory {
                states,
                inputs,
                outputs: None,
                controller_states: None,
            }
        })
        .collect();
    Ok(ExperimentDataset::assemble(
        trajectories,
        seed,
        PolicyDescriptor::Exploration(policy.clone()),
    ))
}

/// `N` trajectories of the interconnection of `G` with a dynamic controller,
/// `x_0 = ξ_0 = 0`. At each step trajectory `n` draws `v_t` then `w_t` from
/// `stream_rng(seed, n)`; the final output draws `v_T`.
pub fn simulate_po_trajectories(
    g: &OutputSystem,
    controller: &DynamicController,
    n: usize,
    t: usize,
    seed: u64,
) -> Result<ExperimentDataset> {
    let dx = g.state_dim();
    let du = g.input_dim();
    let dy = g.output_dim();
    let dxi = controller.state_dim();
    check_shape(&controller.b_dyn, dxi, dy, "B_dyn")?;
    if controller.k.nrows() != du {
        return Err(dim_err(format!(
            "controller output must have {du} rows, got {}",
            controller.k.nrows()
        )));
    }
    let trajectories = (0..n as u64)
        .into_par_iter()
        .map(|index| {
            let mut rng = stream_rng(seed, index);
            let mut v_sampler = GaussianSampler::new(&g.sigma_v);
            let mut w_sampler = GaussianSampler::new(&g.sigma_w);
            let mut x = Vector::zeros(dx);
            let mut xi = Vector::zeros(dxi);
            let mut y = Vector::zeros(dy);
            let mut u = Vector::zeros(du);
            let mut w = Vector::zeros(dx);
            let mut next_x = Vector::zeros(dx);
            let mut next_xi = Vector::zeros(dxi);
            let mut states = Vec::with_capacity(t + 1);
            let mut inputs = Vec::with_capacity(t);
            let mut outputs = Vec::with_capacity(t + 1);
            let mut xis = Vec::with_capacity(t + 1);
            for _ in 0..t {
                v_sampler.sample_into(&mut rng, &mut y);
                y.gemv(1.0, &g.c, &x, 1.0);
                u.gemv(1.0, &controller.k, &xi, 0.0);
                w_sampler.sample_into(&mut rng, &mut w);
                states.push(to_vec(&x));
                outputs.push(to_vec(&y));
                xis.push(to_vec(&xi));
                inputs.push(to_vec(&u));
                next_x.copy_from(&w);
                next_x.gemv(1.0, &g.a, &x, 1.0);
                next_x.gemv(1.0, &g.b, &u, 1.0);
                next_xi.gemv(1.0, &controller.a_dyn, &xi, 0.0);
                next_xi.gemv(1.0, &controller.b_dyn, &y, 1.0);
                std::mem::swap(&mut x, &mut next_x);
                std::mem::swap(&mut xi, &mut next_xi);
            }
            v_sampler.sample_into(&mut rng, &mut y);
            y.gemv(1.0, &g.c, &x, 1.0);
            states.push(to_vec(&x));
            outputs.push(to_vec(&y));
            xis.push(to_vec(&xi));
            Trajectory {
                states,
                inputs,
                outputs: Some(outputs),
                controller_states: Some(xis),
            }
        })
        .collect();
    Ok(ExperimentDataset::assemble(
        trajectories,
        seed,
        PolicyDescriptor::Dynamic(controller.clone()),
    ))
}

/// Realized average input energy against the budget `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub realized_average: f64,
    pub within_budget: bool,
}

/// [`budget_report_with_slack`] with the default 5% slack.
pub fn budget_report(dataset: &ExperimentDataset, beta: f64) -> BudgetReport {
    budget_report_with_slack(dataset, beta, BUDGET_SLACK)
}

pub fn budget_report_with_slack(dataset: &ExperimentDataset, beta: f64, slack: f64) -> BudgetReport {
    let steps = dataset.total_steps();
    let realized_average = if steps == 0 {
        0.0
    } else {
        dataset.realized_input_energy / steps as f64
    };
    BudgetReport {
        realized_average,
        within_budget: realized_average <= beta * (1.0 + slack),
    }
}
