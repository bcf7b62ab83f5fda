//! Dual mixed volumes of star bodies in cotangent bundles, with the Finsler,
//! dynamical and systolic machinery needed to check the associated inequalities
//! on flat tori, the round sphere and the projective plane.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod error;
pub mod dualvol;
pub mod dynamics;
pub mod exprlang;
pub mod field;
pub mod finsler;
pub mod geometry;
pub mod numerics;
pub mod starbody;
pub mod suite;
pub mod systole;

pub use error::{Error, Result};
