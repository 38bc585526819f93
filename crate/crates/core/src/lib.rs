//! Monotone edge-averaged finite element discretization of elliptic optimal
//! control problems with convection-diffusion-reaction state equations.

// Negated float comparisons are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod eafe;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod io;
pub mod mesh;
pub mod problems;
pub mod quadrature;
pub mod sparse;
pub mod verify;

pub use error::{Error, Result};
