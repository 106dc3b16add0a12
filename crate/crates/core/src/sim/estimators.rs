//! Plug-in (least squares) and zeroth-order policy-gradient estimators.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{stream_rng, ExperimentDataset, GaussianSampler};
use crate::error::{dim_err, Error, Result};
use crate::linalg::{check_shape, symmetrize};
use crate::lqr::{
    exact_policy_gradient, is_stabilizing, lqr_cost, Controller, CostSpec, StateSpaceSystem,
    DEFAULT_MARGIN,
};
use crate::random::gaussian_matrix;
use crate::{Mat, Vector};

/// Plug-in ridge per sample: the default ridge is `1e-10 · NT`.
pub const DEFAULT_RIDGE_PER_SAMPLE: f64 = 1e-10;

/// Relative eigenvalue floor below which an unregularized regressor is singular.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMethod {
    PluginLs,
    ZerothOrder,
}

impl EstimatorMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorMethod::PluginLs => "plugin_ls",
            EstimatorMethod::ZerothOrder => "zeroth_order",
        }
    }
}

impl std::fmt::Display for EstimatorMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the zeroth-order estimator evaluates the cost of a perturbed gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostOracle {
    /// Average stage cost of one noisy rollout of the given length from `x_0 = 0`.
    Rollout { horizon: usize },
    /// The exact infinite-horizon cost `J(K + U)`.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMeta {
    Plugin {
        ridge: f64,
        /// Condition number of `Σ z zᵀ`, `z = [x; u]`.
        condition: f64,
    },
    ZerothOrder {
        radius: f64,
        batch: usize,
        oracle: CostOracle,
        /// Perturbed gains `K + U_i` that do not stabilize the system.
        destabilized_samples: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    /// `None` when the estimate failed; see `failure`.
    #[serde(with = "crate::serde_matrix::option")]
    pub estimate: Option<Mat>,
    pub method: EstimatorMethod,
    pub meta: EstimateMeta,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failure: Option<String>,
}

impl GradientEstimate {
    pub fn is_failure(&self) -> bool {
        self.estimate.is_none()
    }
}

/// Ridge least-squares estimate of `(A, B)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Identification {
    pub a_hat: Mat,
    pub b_hat: Mat,
    /// Condition number of the unregularized Gram matrix `Σ z zᵀ`.
    pub condition: f64,
}

/// Minimizes `Σ |x_{t+1} - Âx_t - B̂u_t|² + ridge (|Â|²_F + |B̂|²_F)`.
pub fn least_squares_identify(dataset: &ExperimentDataset, ridge: f64) -> Result<Identification> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidParameter(format!("ridge must be nonnegative, got {ridge}")));
    }
    let first = dataset
        .trajectories
        .iter()
        .find(|tr| !tr.is_empty())
        .ok_or_else(|| Error::InvalidParameter("dataset has no transitions".into()))?;
    let dx = first.states[0].len();
    let du = first.inputs[0].len();
    let p = dx + du;
    let mut gram = Mat::zeros(p, p);
    let mut cross = Mat::zeros(dx, p);
    let mut z = Vector::zeros(p);
    let mut next = Vector::zeros(dx);
    for tr in &dataset.trajectories {
        for (t, u) in tr.inputs.iter().enumerate() {
            let x = &tr.states[t];
            let x1 = &tr.states[t + 1];
            if x.len() != dx || u.len() != du || x1.len() != dx {
                return Err(dim_err("inconsistent dimensions inside dataset"));
            }
            z.rows_mut(0, dx).copy_from_slice(x);
            z.rows_mut(dx, du).copy_from_slice(u);
            next.copy_from_slice(x1);
            gram.ger(1.0, &z, &z, 1.0);
            cross.ger(1.0, &next, &z, 1.0);
        }
    }
    let gram = symmetrize(&gram);
    let eig = gram.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if ridge == 0.0 && !(lo > RANK_TOL * hi) {
        return Err(Error::SingularRegressor { condition });
    }
    let regularized = gram + Mat::identity(p, p) * ridge;
    let chol = regularized
        .cholesky()
        .ok_or(Error::SingularRegressor { condition })?;
    let theta = chol.solve(&cross.transpose()).transpose();
    Ok(Identification {
        a_hat: theta.columns(0, dx).into_owned(),
        b_hat: theta.columns(dx, du).into_owned(),
        condition,
    })
}

/// Certainty-equivalent gradient: identify `(Â, B̂)` with ridge `1e-10 · NT`, then
/// return the exact gradient of `(Â, B̂, Σ_W)` at `K`. Identification failures and
/// gains that do not stabilize the estimate are reported as failure-marked
/// estimates.
pub fn plugin_gradient_estimator(
    dataset: &ExperimentDataset,
    cost: &CostSpec,
    k: &Controller,
    sigma_w: &Mat,
) -> Result<GradientEstimate> {
    let ridge = DEFAULT_RIDGE_PER_SAMPLE * dataset.total_steps() as f64;
    let failed = |condition: f64, reason: String| GradientEstimate {
        estimate: None,
        method: EstimatorMethod::PluginLs,
        meta: EstimateMeta::Plugin { ridge, condition },
        failure: Some(reason),
    };
    let id = match least_squares_identify(dataset, ridge) {
        Ok(id) => id,
        Err(e) if e.is_validation() => return Err(e),
        Err(e) => return Ok(failed(f64::INFINITY, e.to_string())),
    };
    check_shape(&k.gain, id.b_hat.ncols(), id.a_hat.nrows(), "K")?;
    let sys = StateSpaceSystem {
        a: id.a_hat,
        b: id.b_hat,
        sigma_w: sigma_w.clone(),
    };
    check_shape(sigma_w, sys.state_dim(), sys.state_dim(), "SigmaW")?;
    match exact_policy_gradient(&sys, cost, k) {
        Ok(g) if g.iter().all(|v| v.is_finite()) => Ok(GradientEstimate {
            estimate: Some(g),
            method: EstimatorMethod::PluginLs,
            meta: EstimateMeta::Plugin {
                ridge,
                condition: id.condition,
            },
            failure: None,
        }),
        Ok(_) => Ok(failed(id.condition, "non-finite gradient on the estimate".into())),
        Err(e) if e.is_validation() => Err(e),
        Err(e) => Ok(failed(id.condition, e.to_string())),
    }
}

/// Average stage cost of one rollout of length `horizon` from `x_0 = 0` under `K`.
fn rollout_cost<R: Rng + ?Sized>(
    sys: &StateSpaceSystem,
    cost: &CostSpec,
    k: &Mat,
    horizon: usize,
    rng: &mut R,
) -> f64 {
    let dx = sys.state_dim();
    let du = sys.input_dim();
    let mut w_sampler = GaussianSampler::new(&sys.sigma_w);
    let mut x = Vector::zeros(dx);
    let mut u = Vector::zeros(du);
    let mut w = Vector::zeros(dx);
    let mut next = Vector::zeros(dx);
    let mut qx = Vector::zeros(dx);
    let mut ru = Vector::zeros(du);
    let mut total = 0.0;
    for _ in 0..horizon {
        u.gemv(1.0, k, &x, 0.0);
        qx.gemv(1.0, &cost.q, &x, 0.0);
        ru.gemv(1.0, &cost.r, &u, 0.0);
        total += x.dot(&qx) + u.dot(&ru);
        w_sampler.sample_into(rng, &mut w);
        next.copy_from(&w);
        next.gemv(1.0, &sys.a, &x, 1.0);
        next.gemv(1.0, &sys.b, &u, 1.0);
        std::mem::swap(&mut x, &mut next);
    }
    total / horizon as f64
}

/// Smoothed-functional estimate `(d / (r² m)) Σ_i Ĵ(K + U_i) U_i` with `U_i`
/// uniform on the Frobenius sphere of radius `r` and `d = d_u d_x`. Sample `i`
/// draws `U_i` and then its rollout noise from `stream_rng(seed, i)`.
pub fn zeroth_order_gradient_estimator(
    sys: &StateSpaceSystem,
    cost: &CostSpec,
    k: &Controller,
    radius: f64,
    batch: usize,
    oracle: CostOracle,
    seed: u64,
) -> Result<GradientEstimate> {
    let (dx, du) = (sys.state_dim(), sys.input_dim());
    check_shape(&k.gain, du, dx, "K")?;
    if !(radius > 0.0 && radius.is_finite()) || batch == 0 {
        return Err(Error::InvalidParameter(format!(
            "zeroth-order estimator needs radius > 0 and batch >= 1, got r={radius}, m={batch}"
        )));
    }
    if let CostOracle::Rollout { horizon: 0 } = oracle {
        return Err(Error::InvalidParameter("rollout horizon must be >= 1".into()));
    }
    if !is_stabilizing(k, sys, DEFAULT_MARGIN)? {
        return Err(Error::UnstableClosedLoop {
            spectral_radius: crate::linalg::spectral_radius(&sys.closed_loop(k)?)?,
        });
    }
    let samples: Vec<(f64, Mat, bool)> = (0..batch as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            let g = gaussian_matrix(&mut rng, du, dx);
            let u = &g * (radius / g.norm());
            let perturbed = Controller::new(&k.gain + &u);
            let stable = is_stabilizing(&perturbed, sys, DEFAULT_MARGIN).unwrap_or(false);
            let j = match oracle {
                CostOracle::Rollout { horizon } => {
                    rollout_cost(sys, cost, &perturbed.gain, horizon, &mut rng)
                }
                CostOracle::Exact => lqr_cost(sys, cost, &perturbed).unwrap_or(f64::NAN),
            };
            (j, u, stable)
        })
        .collect();
    let destabilized_samples = samples.iter().filter(|s| !s.2).count();
    let meta = EstimateMeta::ZerothOrder {
        radius,
        batch,
        oracle,
        destabilized_samples,
    };
    if samples.iter().any(|s| !s.0.is_finite()) {
        return Ok(GradientEstimate {
            estimate: None,
            method: EstimatorMethod::ZerothOrder,
            meta,
            failure: Some("non-finite cost for a perturbed gain".into()),
        });
    }
    let mut sum = Mat::zeros(du, dx);
    for (j, u, _) in &samples {
        sum += u * *j;
    }
    let d = (du * dx) as f64;
    Ok(GradientEstimate {
        estimate: Some(sum * (d / (radius * radius * batch as f64))),
        method: EstimatorMethod::ZerothOrder,
        meta,
        failure: None,
    })
}
