//! Quadratic forms over the polarization variable `Φ = ε Hc U` and the
//! conservation-law constraints that encode the dynamics.

mod builder;
pub mod export;
mod form;

pub use builder::*;
pub use form::*;
