//! Monotone finite difference schemes for periodic parabolic
//! Hamilton-Jacobi-Bellman equations
//!
//! ```text
//! u_t + sup_a { -tr[a^a D^2u] - b^a . Du - c^a u - f^a } = 0   on (0, T] x [0, L)^N
//! ```
//!
//! together with switching systems, semigroup approximations and the
//! refinement harness used to measure convergence rates.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod grid;
pub mod harness;
pub mod manufactured;
pub mod problem;
pub mod scheme;
pub mod semigroup;
pub mod smooth;
pub mod stencil;
pub mod switching;

pub use error::{Error, Result};
pub use grid::{GridFunction, SpaceTimeGrid, SpatialGrid};
pub use problem::{CoefficientField, ControlCoefficients, ControlSet, HJBProblem};
