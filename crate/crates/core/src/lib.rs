//! Born weights of an incoming wave over a detector partition, block-structured
//! measurement Hamiltonians, and absorbing martingale walks on the probability
//! simplex whose vertex-absorption law reproduces the Born weights.
//!
//! Indices in the Rust API are 0-based. Files and reports written for people
//! (CSV rows, walk records) label regions and vertices from 1.

// `!(x <= tol)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blockop;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod oracle;
pub mod simplex;
pub mod simplexwalk;
pub mod stats;
pub mod wavepacket;

pub use error::{Error, Result};
pub use geometry::{DetectorArray, Rect};
pub use simplex::SimplexPoint;
