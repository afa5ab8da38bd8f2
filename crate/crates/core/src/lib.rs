//! Magnetic geodesic flows on chart-defined Riemannian manifolds.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod curvature;
pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod linalg;
pub mod magnetic;
pub mod registry;
pub mod sampling;
pub mod scenario;
pub mod submanifolds;
pub mod transport;

pub use error::{Error, Result};
