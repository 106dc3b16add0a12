//! Exact LQR policy gradients and information-theoretic limits on estimating them.
//!
//! The crate is organised in four layers:
//!
//! * [`lqr`]: stability checks, Lyapunov and Riccati solves, the LQR cost and its
//!   exact gradient with respect to a static feedback gain.
//! * [`hard_instances`]: perturbations that leave the optimal closed loop invariant,
//!   exact trajectory KL divergences, two-point certificates, and the integrator
//!   chain whose Riccati solution grows exponentially with the state dimension.
//! * [`partial_obs`]: the output-feedback extension built on the steady-state
//!   innovation model.
//! * [`sim`]: seeded trajectory simulation, plug-in and zeroth-order gradient
//!   estimators, a Monte-Carlo KL oracle and the estimator-spread experiment.

pub mod error;
pub mod hard_instances;
pub mod linalg;
pub mod lqr;
pub mod partial_obs;
pub mod random;
pub mod serde_matrix;
pub mod sim;

pub use error::{Error, Result};
pub use lqr::{Controller, CostSpec, Gramian, StateSpaceSystem, ValueMatrix};

/// Dense real matrix used throughout the crate.
pub type Mat = nalgebra::DMatrix<f64>;
/// Dense real column vector.
pub type Vector = nalgebra::DVector<f64>;
