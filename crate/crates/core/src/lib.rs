#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN
#![allow(clippy::needless_range_loop)]

//! Numerical laboratory for multi-peak minimizers of the critical trace-exponent quotient
//!
//! `I[u] = (|grad u|_p^p + lambda |u|_p^p) / |u|_{L_q(S)}^p`, `q = (n-1)p/(n-p)`,
//!
//! over fields on the unit ball that are invariant under a finite rotation (and reflection)
//! group. Minimizers concentrate their boundary `q`-mass at the points of a minimal group orbit
//! as `lambda` grows; each orbit size gives a distinct solution.

pub mod analysis;
pub mod error;
pub mod field;
pub mod functional;
pub mod geom;
pub mod mesh;
pub mod optimizer;
pub mod quadrature;
pub mod sparse;
pub mod symmetry;
pub mod trace_constant;

pub use error::{Error, Result};
