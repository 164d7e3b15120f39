//! Numerical laboratory for the wave equation on small-spin Kerr backgrounds.

pub mod diagnostics;
pub mod error;
pub mod geodesics;
pub mod geometry;
pub mod trapping;
pub mod wavesolver;
pub mod scalar;
pub mod symbolcheck;

pub use error::{Error, Result};
