//! Monte Carlo and analytic tools for the large-context limits of softmax
//! attention with random contexts on the unit sphere.

pub mod attention;
pub mod density;
pub mod error;
pub mod experiments;
pub mod expr;
pub mod laws;
pub mod quad;
pub mod rope;
pub mod samplers;
pub mod special;
pub mod sphere;
pub mod stats;
pub mod thresholds;

pub use error::{Error, Result};
