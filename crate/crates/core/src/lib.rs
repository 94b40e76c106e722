//! Simulation and verification toolkit for ODEs, transport equations and
//! continuity equations whose bounded measurable velocity fields are perturbed
//! along fractional Brownian paths.
//!
//! The crate is organised bottom-up:
//!
//! * [`fbm`] generates fractional Brownian paths (Cholesky, circulant
//!   embedding, Volterra representation) and superpositions of them.
//! * [`fraccalc`] provides Riemann–Liouville operators, the inverse of the
//!   Volterra operator and Girsanov weights.
//! * [`flow`] solves the perturbed ODE pathwise and computes flows together
//!   with their variational and Malliavin derivatives.
//! * [`transport`] and [`continuity`] build the PDE solutions on top of the
//!   flow, each with an independent finite-difference / finite-volume oracle.
//! * [`analysis`] holds the Monte Carlo verification experiments and the exact
//!   shuffle-product engine.

pub mod analysis;
pub mod continuity;
mod error;
pub mod fbm;
pub mod flow;
pub mod fraccalc;
pub mod grid;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod table;
pub mod transport;

pub use error::{Error, Result};
pub use grid::TimeGrid;

/// Version string written into run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
