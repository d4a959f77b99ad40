//! Simulation and convergence diagnostics for the genealogies of asymmetric
//! Cannings (AC) and asymmetric Wright-Fisher (AWF) population models.
//!
//! The crate is organised bottom-up: [`partitions`] and [`special_fn`] hold the
//! combinatorial and numerical primitives, [`coag_measures`] the limiting
//! Λ-/Ξ-coalescents, [`population_models`] the finite-N reproduction laws,
//! [`pd_analysis`] the stick-breaking machinery for Poisson–Dirichlet weights,
//! [`engine`] the reproducible Monte Carlo layer, and [`diagnostics`] the
//! executable convergence checks. [`cli`] wires everything to the binary.

pub mod cli;
pub mod coag_measures;
pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod injections;
pub mod partitions;
pub mod pd_analysis;
pub mod population_models;
pub mod quadrature;
pub mod rng;
pub mod special_fn;
pub mod stats;

pub use error::{Error, Result};
