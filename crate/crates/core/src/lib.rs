//! Simulation and certification toolkit for tatonnement price dynamics in
//! ongoing Fisher markets with warehouses.

// Negated float comparisons are used on purpose so that NaN fails the test.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod certify;
pub mod demand;
pub mod elasticity;
pub mod engine;
pub mod equilibrium;
pub mod error;
pub mod harness;
pub mod inequalities;
pub mod lyapunov;
pub mod market;
pub mod planner;
pub mod trace;

pub use error::{Error, Result};
