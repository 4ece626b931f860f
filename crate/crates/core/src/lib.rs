//! Semi-implicit upwind finite volumes for the stochastic nonlinear
//! diffusion–convection equation
//!
//! ```text
//! du - Δu dt + div(v u) dt = g(u) dW + β(u) dt   in Λ,   ∇u·n = 0 on ∂Λ
//! ```
//!
//! on admissible two-point-flux meshes, together with Monte Carlo and
//! convergence tooling around the scheme.

// `!(x > 0.0)` is used on purpose so that NaN is rejected; banded kernels index by row and column.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod calculus;
pub mod cli;
pub mod config;
pub mod geometry;
pub mod linalg;
pub mod mesh;
pub mod problem;
pub mod quadrature;
pub mod scheme;
pub mod stochastic;
mod sum;
pub mod velocity;

pub use sum::{compensated_sum, CompensatedSum};
