//! Orthogonal geodesic chords in Riemannian disks.
//!
//! The crate finds, verifies and counts geodesics that leave and hit the
//! boundary of a domain orthogonally, using constrained energy descent over a
//! discrete path space, orthogonal shooting with Newton refinement, and a
//! multistart catalog. Jacobi metrics turn those chords into brake orbits of
//! natural Lagrangian systems.

// `!(x > tol)` is used throughout so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod brake;
pub mod descent;
pub mod error;
pub mod geometry;
pub mod multiplicity;
pub mod ode;
pub mod pathspace;
pub mod shooting;
pub mod transversality;

pub use error::{Error, Result};
