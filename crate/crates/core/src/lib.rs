//! Anisotropic expanding curvature flows of star-shaped and convex hypersurfaces.
//!
//! Fields live on a discretized unit sphere ([`grid`]); hypersurfaces are carried
//! either by a radial function or by a support function ([`shape`]). The flow
//! engine ([`flow`]) evolves them, [`functionals`] tracks the monotone
//! quantities and [`minkowski`] turns converged flows into solutions of
//! Minkowski-type problems. [`oracle`] holds closed forms used for validation.
#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod curvature;
mod error;
pub mod flow;
pub mod functionals;
pub mod grid;
mod math;
pub mod minkowski;
pub mod oracle;
pub mod shape;

pub use error::{Error, Result};
