//! Numerical laboratory for log-Sobolev constants of Gaussian-mollified
//! measures and the concentration results built on them.
//!
//! Layers, bottom up: [`special`] and [`quad`] provide log-space Gaussian
//! functions and adaptive quadrature; [`measure`] and [`mollify`] represent
//! measures and their mollifications; [`bg`] brackets LSI constants;
//! [`rmt`] runs random-matrix experiments; [`highdim`] certifies curvature
//! of mollified atom clouds in ℝⁿ.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bg;
pub mod highdim;
pub mod measure;
pub mod mollify;
pub mod quad;
pub mod rmt;
pub mod rng;
pub mod special;

pub use bg::{compute_bg, BGReport};
pub use measure::Measure1D;
pub use mollify::{MollifiedDensity, Side};
