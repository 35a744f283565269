//! Numerical tools for homogeneous dynamics on SL(m,ℝ)/SL(m,ℤ).

pub mod cocycles;
pub mod error;
pub mod expcli;
pub mod grouplin;
pub mod lattices;
pub mod measures;
pub mod modular;
pub mod rng;
pub mod space;
pub mod sumsets;
pub mod wordgeom;

pub use error::{Error, Result};
