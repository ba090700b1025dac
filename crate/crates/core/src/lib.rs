//! Simulation engine for two mechanically coupled gain-loss optomechanical
//! cavities.
//!
//! The crate integrates the classical mean-field dynamics, analyses the
//! effective non-Hermitian mechanical modes and their exceptional point,
//! propagates the Gaussian covariance matrix of the linearized fluctuations,
//! and evaluates synchronization, entanglement, Wigner and fidelity metrics.

pub mod classical;
pub mod effective;
pub mod experiments;
pub mod fluctuations;
pub mod metrics;
pub mod model;
pub mod ode;
pub mod smallmat;
pub mod stochastic_oracle;

mod error;

pub use error::Error;
pub use model::{SystemParams, ValidationReport, REFERENCE_DEFAULTS};

pub type Result<T, E = Error> = std::result::Result<T, E>;
