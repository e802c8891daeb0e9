//! Neural-network solution bundles for parameterized ODE systems, with
//! calibrated Bayesian uncertainty and observational parameter inference.
//!
//! The pieces fit together in a pipeline:
//!
//! 1. [`train`] fits a deterministic network to an ODE family over a box of
//!    equation parameters, enforcing initial conditions exactly by
//!    construction ([`models`]).
//! 2. [`bounds`] turns the trained network's residual into certified error
//!    bounds for first-order linear systems.
//! 3. [`bayes`] attaches uncertainty: a second-step Bayesian network (neural
//!    linear model, variational, or NUTS) trained on the deterministic
//!    solution with a likelihood width taken from the error bounds.
//! 4. [`inverse`] estimates equation parameters from observations by
//!    marginalizing over the learned solution distribution with an
//!    affine-invariant ensemble sampler.
//! 5. [`metrics`] scores accuracy and uncertainty calibration.

pub mod bayes;
pub mod bounds;
pub mod dual;
pub mod error;
pub mod inverse;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod presets;
pub mod rngutil;
pub mod train;

pub use error::{Error, Result};
