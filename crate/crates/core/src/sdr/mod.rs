//! Semidefinite relaxation of the QCQP and its solution.

mod bounds;
mod lift;
mod solver;

pub use bounds::*;
pub use lift::*;
pub use solver::*;
