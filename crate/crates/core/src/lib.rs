//! Cooperative source seeking with formation control over a time-varying scalar field.
//!
//! Agents sample a quadratic field, estimate its gradient from their
//! neighbours' samples, and descend the field plus a formation potential.

// `!(x > 0.0)` style checks are kept on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod formation;
pub mod gradestim;
pub mod sim;

pub use error::{Error, Result};
