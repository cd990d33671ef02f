//! Risk-region scenario generation and CVaR portfolio selection.
//!
//! The crate covers cone geometry and projection, elliptical loss models,
//! risk-region membership and aggregation, aggregation sampling, scenario
//! CVaR optimization (LP and branch-and-bound), and a sample average
//! approximation driver with ghost bounds.

pub mod cones;
pub mod cvar_opt;
pub mod distributions;
pub mod error;
pub mod risk_region;
pub mod rng;
pub mod saa;
pub mod scenario_gen;
pub mod solvers;
pub mod synthetic;

pub use error::{Error, Result};
