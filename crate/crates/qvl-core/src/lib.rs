//! Numerical laboratory for Q-valued maps: the optimal-assignment metric,
//! grid fields and their energies, competitor constructions, a Dirichlet
//! solver, and stationarity/frequency diagnostics.

pub mod assignment;
pub mod competitor;
pub mod error;
pub mod grid;
pub mod minimize;
pub mod qfield;
pub mod qspace;
pub mod samples;
pub mod station;
pub mod tolerances;

pub use error::{QvlError, Result};
pub use qspace::QPoint;
