//! Certified upper bounds for quantum optimal control from conservation-law
//! constraints and semidefinite relaxation, plus local pulse design and
//! speed-limit baselines for comparison.

pub mod baselines;
pub mod design;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod open_system;
pub mod propagator;
pub mod qcqp;
pub mod scenario_file;
pub mod sdr;

pub use error::{Error, Result};
