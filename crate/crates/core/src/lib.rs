//! Numerical laboratory for Perelman-type L-geometry on model backwards
//! Ricci flows.
//!
//! A backwards Ricci flow is a family of metrics with ∂g/∂τ = 2 Ric_{g(τ)}.
//! On four closed-form model flows (flat torus, round sphere, hyperbolic
//! space, sphere × torus product) this crate provides:
//!
//! * exact curvature data for every quantity consumed by the L-functional
//!   machinery ([`geometry`]),
//! * L-functional evaluation, minimal L-geodesic boundary-value solving,
//!   space-time parallel transport, and numeric verification of the first
//!   and second variation formulas ([`lgeo`]),
//! * the coupled geodesic random walk whose two components step by frozen
//!   exponential maps of a common uniform-ball increment identified through
//!   space-time parallel transport ([`walk`]),
//! * Monte Carlo experiments checking that the normalized L-distance Θ
//!   between the coupled particles behaves as a supermartingale and that the
//!   normalized L-transportation cost between evolving distributions is
//!   non-increasing ([`harness`]).

pub mod error;
pub mod geometry;
pub mod harness;
pub mod lgeo;
pub mod walk;

pub use error::{Error, Result};

/// Hard cap on the manifold dimension; lets inner ODE loops live on the stack.
pub const MAX_DIM: usize = 8;
