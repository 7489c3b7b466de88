//! Hamiltonian Monte Carlo on Euclidean phase space.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: analytic target densities and their gradients.
//! - [`hamiltonian`]: Euclidean metrics, Gaussian momenta and phase-space points.
//! - [`integrator`]: the leapfrog integrator and divergence detection.
//! - [`transition`]: static Metropolis HMC, static multinomial sampling and the
//!   dynamic multiplicative-expansion sampler with the No-U-Turn criterion.
//! - [`adapt`]: warm-up adaptation of the step size and the metric.
//! - [`diagnose`]: ESS, MCMC standard error, split R-hat, E-BFMI and run summaries.
//! - [`sampler`]: a single chain's warm-up and sampling loop.

pub mod adapt;
pub mod diagnose;
mod error;
pub mod hamiltonian;
pub mod integrator;
pub mod math;
pub mod model;
pub mod sampler;
pub mod transition;

pub use error::{Error, Result};
pub use hamiltonian::{Metric, PhasePoint};
pub use integrator::{Direction, DivergenceConfig, StepSize};
pub use model::{Target, TargetDescriptor};
pub use transition::Draw;
