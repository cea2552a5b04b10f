//! Numerical laboratory for the one-dimensional stochastic continuity equation
//!
//! ```text
//! ∂_t u + ∂_x((b(t, x, ω) + dB/dt) u) = 0
//! ```
//!
//! with a rough, possibly random drift `b`. The crate provides Brownian paths
//! with bridge refinement, drift catalogs and mollification, stochastic flows
//! and their Jacobians, the characteristics representation of the solution,
//! Monte Carlo estimators for the inverse-Jacobian moment and commutator
//! decay, and scenario runners behind the `scelab` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod brownian;
pub mod drift;
pub mod error;
pub mod estimates;
pub mod experiments;
pub mod flow;
pub mod par;
pub mod quadrature;
pub mod spde;

pub use error::{Error, Result};
