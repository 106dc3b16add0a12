//! Spread of the two gradient estimators on `x' = a x + b u + w` across `b`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    plugin_gradient_estimator, simulate_trajectories, sub_seed, zeroth_order_gradient_estimator,
    CostOracle, EstimatorMethod, ExperimentDataset, GradientEstimate,
};
use crate::error::{Error, Result};
use crate::hard_instances::{scalar_lqr, ExplorationPolicy};
use crate::linalg::operator_norm;
use crate::lqr::{exact_policy_gradient, Controller, CostSpec, StateSpaceSystem};

/// Experiment parameters. Defaults: `a = 1`, `σ_w = 1`, `T = 100`, 100 plug-in
/// trajectories, `10⁴` zeroth-order rollouts in batches of 100, `r = 0.05`,
/// `β = 1`, `q = r = 1`, evaluation gain `k⋆` of the `b_ref = 1` system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Figure1Config {
    pub a: f64,
    pub noise_std: f64,
    pub b_grid: Vec<f64>,
    pub horizon: usize,
    pub plugin_trajectories: usize,
    pub zeroth_order_rollouts: usize,
    pub zeroth_order_batch: usize,
    pub radius: f64,
    pub beta: f64,
    pub q: f64,
    pub r: f64,
    /// The evaluation gain is the optimal gain of `(a, b_ref)`.
    pub b_ref: f64,
    pub seed: u64,
    pub methods: Vec<EstimatorMethod>,
}

impl Default for Figure1Config {
    fn default() -> Self {
        Self {
            a: 1.0,
            noise_std: 1.0,
            b_grid: vec![0.05, 0.1, 0.25, 0.5, 1.0],
            horizon: 100,
            plugin_trajectories: 100,
            zeroth_order_rollouts: 10_000,
            zeroth_order_batch: 100,
            radius: 0.05,
            beta: 1.0,
            q: 1.0,
            r: 1.0,
            b_ref: 1.0,
            seed: 0,
            methods: vec![EstimatorMethod::PluginLs, EstimatorMethod::ZerothOrder],
        }
    }
}

impl Figure1Config {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.b_grid.is_empty() {
            return bad("b grid is empty".into());
        }
        if let Some(b) = self.b_grid.iter().find(|b| !(b.is_finite() && **b != 0.0)) {
            return bad(format!("b grid entries must be finite and nonzero, got {b}"));
        }
        if self.horizon == 0 || self.plugin_trajectories < 2 || self.zeroth_order_batch == 0 {
            return bad("horizon, batch size must be >= 1 and plug-in trajectories >= 2".into());
        }
        if self.zeroth_order_rollouts < 2 * self.zeroth_order_batch
            || self.zeroth_order_rollouts % self.zeroth_order_batch != 0
        {
            return bad(format!(
                "zeroth-order rollouts ({}) must be a multiple (>= 2) of the batch size ({})",
                self.zeroth_order_rollouts, self.zeroth_order_batch
            ));
        }
        for (name, v) in [
            ("noise_std", self.noise_std),
            ("radius", self.radius),
            ("beta", self.beta),
            ("r", self.r),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.q >= 0.0 && self.a.is_finite() && self.b_ref.is_finite() && self.b_ref != 0.0) {
            return bad("q must be nonnegative; a and b_ref finite with b_ref != 0".into());
        }
        if self.methods.is_empty() {
            return bad("no estimator selected".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure1Row {
    pub b: f64,
    pub method: EstimatorMethod,
    /// Sample standard deviation of `‖∇J - ∇̂J‖_op` over non-failed estimates.
    pub error_std: f64,
    pub n_failures: usize,
    /// Estimates that entered `error_std`.
    pub n_samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure1Result {
    pub rows: Vec<Figure1Row>,
    pub evaluation_gain: f64,
}

fn spread(estimates: &[GradientEstimate], exact: &crate::Mat) -> (f64, usize, usize) {
    let errors: Vec<f64> = estimates
        .iter()
        .filter_map(|e| e.estimate.as_ref())
        .map(|g| operator_norm(&(exact - g)))
        .collect();
    let failures = estimates.len() - errors.len();
    let n = errors.len();
    if n < 2 {
        return (f64::NAN, failures, n);
    }
    let mean = errors.iter().sum::<f64>() / n as f64;
    let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1) as f64;
    (var.sqrt(), failures, n)
}

/// Runs both estimators for every `b` in the grid and reports their spread.
///
/// Grid point `i` seeds its plug-in data with `sub_seed(seed, 2i)` and its
/// zeroth-order batches with `sub_seed(sub_seed(seed, 2i + 1), j)`.
pub fn figure1_experiment(config: &Figure1Config) -> Result<Figure1Result> {
    config.validate()?;
    let noise_var = config.noise_std * config.noise_std;
    let cost = CostSpec::scalar(config.q, config.r)?;
    let k_eval = scalar_lqr(config.a, config.b_ref, config.q, config.r, noise_var)?.k;
    let gain = Controller::scalar(k_eval);
    for &b in &config.b_grid {
        let acl = config.a + b * k_eval;
        if !(acl.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "evaluation gain {k_eval} does not stabilize b = {b} (closed loop {acl})"
            )));
        }
    }

    let mut rows = Vec::new();
    for (i, &b) in config.b_grid.iter().enumerate() {
        let sys = StateSpaceSystem::scalar(config.a, b, noise_var)?;
        let exact = exact_policy_gradient(&sys, &cost, &gain)?;
        for method in [EstimatorMethod::PluginLs, EstimatorMethod::ZerothOrder] {
            if !config.methods.contains(&method) {
                continue;
            }
            let estimates = match method {
                EstimatorMethod::PluginLs => {
                    let policy = ExplorationPolicy::isotropic(gain.clone(), config.beta)?;
                    let data = simulate_trajectories(
                        &sys,
                        &policy,
                        config.plugin_trajectories,
                        config.horizon,
                        sub_seed(config.seed, 2 * i as u64),
                    )?;
                    data.trajectories
                        .par_iter()
                        .map(|tr| {
                            let single = ExperimentDataset {
                                realized_input_energy: tr.input_energy(),
                                trajectories: vec![tr.clone()],
                                seed: data.seed,
                                policy: data.policy.clone(),
                            };
                            plugin_gradient_estimator(&single, &cost, &gain, &sys.sigma_w)
                        })
                        .collect::<Result<Vec<_>>>()?
                }
                EstimatorMethod::ZerothOrder => {
                    let base = sub_seed(config.seed, 2 * i as u64 + 1);
                    let batches = config.zeroth_order_rollouts / config.zeroth_order_batch;
                    (0..batches as u64)
                        .into_par_iter()
                        .map(|j| {
                            zeroth_order_gradient_estimator(
                                &sys,
                                &cost,
                                &gain,
                                config.radius,
                                config.zeroth_order_batch,
                                CostOracle::Rollout {
                                    horizon: config.horizon,
                                },
                                sub_seed(base, j),
                            )
                        })
                        .collect::<Result<Vec<_>>>()?
                }
            };
            let (error_std, n_failures, n_samples) = spread(&estimates, &exact);
            rows.push(Figure1Row {
                b,
                method,
                error_std,
                n_failures,
                n_samples,
                seed: config.seed,
            });
        }
    }
    Ok(Figure1Result {
        rows,
        evaluation_gain: k_eval,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        Figure1Config::default().validate().unwrap();
        let cfg = Figure1Config {
            b_grid: vec![],
            ..Figure1Config::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn small_run_is_finite_and_filtered() {
        let cfg = Figure1Config {
            b_grid: vec![1.0],
            plugin_trajectories: 20,
            zeroth_order_rollouts: 400,
            methods: vec![EstimatorMethod::PluginLs],
            ..Figure1Config::default()
        };
        let out = figure1_experiment(&cfg).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert_eq!(out.rows[0].method, EstimatorMethod::PluginLs);
        assert!(out.rows[0].error_std.is_finite());
        assert_eq!(out.rows[0].n_samples + out.rows[0].n_failures, 20);
    }

    #[test]
    fn destabilizing_grid_point_is_rejected() {
        let cfg = Figure1Config {
            b_grid: vec![5.0],
            ..Figure1Config::default()
        };
        assert!(matches!(figure1_experiment(&cfg), Err(Error::InvalidParameter(_))));
    }
}
