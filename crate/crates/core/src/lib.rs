//! Numerical free probability through analytic subordination.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`] small dense complex helpers on top of `faer`;
//! * [`domain`] half-planes, balls and contraction criteria for matrices;
//! * [`spectral`] probability measures on the line and on the unit circle
//!   together with their Cauchy-type transforms;
//! * [`additive`] and [`multiplicative`] scalar subordination solvers;
//! * [`cumulants`] moment / free-cumulant conversion;
//! * [`operator_valued`] matrix-valued semicircular transforms and the
//!   subordination map between them;
//! * [`oracle`] seeded random-matrix experiments used as independent checks.

pub mod additive;
pub mod cumulants;
pub mod domain;
mod error;
pub mod linalg;
pub mod multiplicative;
pub mod operator_valued;
pub mod oracle;
pub mod spectral;

pub use error::{Error, Result};
pub use num_complex::Complex64;
