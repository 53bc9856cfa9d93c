//! Gradient-based control of equilibrium-constrained systems on a discrete
//! elastic strip.
//!
//! A controller `u_Θ(λ)` drives clamp coordinates along a continuation
//! parameter `λ ∈ [0, 1]`; every continuation step re-solves the static
//! equilibrium of the strip, and controller gradients come from a
//! frozen-tangent adjoint recursion that needs one linear solve per step.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

pub mod adjoint;
pub mod baselines;
pub mod controller;
pub mod error;
pub mod exec;
pub mod harness;
pub mod ledger;
pub mod linalg;
pub mod rollout;
pub mod sensitivity;
pub mod solver;
pub mod strip;
pub mod sysid;
pub mod system;
pub mod tasks;

pub use error::{Error, Result};
