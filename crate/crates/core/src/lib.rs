//! Simulation laboratory for a continuous-variable trap-code quantum
//! authentication scheme.
//!
//! * [`cvgauss`]: exact Gaussian-state engine (moments, displacement,
//!   permutation, homodyne conditioning).
//! * [`analytics`]: closed-form selection functions, acceptance indicator,
//!   decoding error, placement probability, security bound, twirl factor.
//! * [`trapauth`]: key generation, encoding, attack application, decoding.
//! * [`adversary`]: displacement-mixture attack specifications.
//! * [`harness`]: seeded Monte Carlo experiments and CSV output.

pub mod analytics;
pub mod cvgauss;
pub mod error;
pub mod harness;
pub mod adversary;
pub mod trapauth;

pub use error::{Error, Result};
