//! Numerical laboratory for a pair of Fokker-Planck equations whose means
//! follow a logistic Lotka-Volterra system.
//!
//! The crate provides the mean-field coefficient maps and fixed points
//! ([`model`]), the closed moment system ([`moments`]), the generalized-Gamma
//! equilibria ([`densities`]), a Chang-Cooper finite-volume solver
//! ([`fpsolver`]), Energy/Cramér distances and relative entropy
//! ([`metrics`]), decay-rate theory and envelopes ([`analysis`]), and the
//! acceptance checks that tie them together ([`acceptance`]).

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod analysis;
pub mod densities;
pub mod error;
pub mod fpsolver;
pub mod metrics;
pub mod model;
pub mod moments;
mod quadrature;

pub use error::{Error, Result};
pub use model::{CoefficientSet, ModelParams, MomentState, Species, SpeciesCoeffs};
