//! Cart-pole control laboratory: lab and LTI cart-pole models, REINFORCE
//! training of Gaussian MLP policies, complex-step parameter sensitivities and
//! Monte-Carlo region-of-attraction estimates.

// `!(a > b)` is used on purpose in validation so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod integrator;
pub mod nadam;
pub mod params;
pub mod policy;
pub mod roa;
pub mod scalar;
pub mod sensitivity;
pub mod trainer;

pub use dynamics::{
    lab_rhs, lti_matrices, lti_rhs, simplified_rhs, LtiSystem, Model, State, StateDerivative,
};
pub use error::{Error, Result};
pub use integrator::{
    semi_euler_step, simulate, Controller, SimConfig, Trajectory, ZeroController,
};
pub use params::{ParamId, PhysicalParams};
pub use policy::{GaussianHead, MlpPolicy};
pub use scalar::{Complex, Scalar};
pub use trainer::{train, TrainOutcome, TrainerConfig};
