//! Simulation and verification toolkit for functional (delay) stochastic
//! partial differential equations with additive noise.
//!
//! The crate checks explicit sufficient conditions for exponential
//! ergodicity, simulates segment solutions by spectral Galerkin truncation,
//! runs synchronous and change-of-measure couplings, and estimates
//! contraction, concentration and Gaussian-supremum tail behaviour.

pub mod cli_runner;
pub mod coupling_harnack;
pub mod ergodics;
pub mod error;
pub mod fernique;
pub mod fspde_sim;
pub mod numerics;
pub mod rng;
pub mod spectral_model;

pub use error::{Error, Result};
