//! Pathwise (IPA), likelihood-ratio and finite-difference sensitivity
//! estimators for reflected diffusions in convex polyhedral domains.

pub mod error;
pub mod estimators;
pub mod euler;
pub mod geometry;
pub mod models;
pub mod reference;
pub mod rng;
pub mod validation;

pub use error::{Error, ErrorKind, Result};
