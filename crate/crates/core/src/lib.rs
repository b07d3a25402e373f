//! Quantum state tomography: measurement designs, count simulation, linear and
//! constrained estimators, error functions and asymptotic risk formulas.

pub mod asymptotics;
pub mod design;
pub mod estimators;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod qstate;
pub mod quadrature;
pub mod sampling;

pub use error::{Result, TomoError};
