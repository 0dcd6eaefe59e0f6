//! Numerical laboratory for two-phase composites.
//!
//! The crate covers the parts of the toolkit that do not need a spatial
//! discretization: block-tensor algebra, exact effective tensors of
//! hierarchical laminates, analytic constraints on conductivity functions,
//! two-well bound computations and the planar elastic bound formulas.
//! The periodic cell solver lives in `complab-cell`.

// `!(x > 0.0)` is used deliberately so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod elastic;
pub mod error;
pub mod geometry;
pub mod laminate;
pub mod linalg;
pub mod tensor;
pub mod twowell;

pub use error::{CoreError, Result};
pub use num_complex::Complex64;

/// Shortest round-trip decimal form of `x`, switching to exponent notation
/// for very small or very large magnitudes so CSV cells stay short.
pub fn csv_number(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}
