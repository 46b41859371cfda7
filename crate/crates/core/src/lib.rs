//! Knockoff-assisted, e-value weighted false discovery rate procedures for
//! variable selection in Gaussian linear regression.

pub mod calibrators;
pub mod dataio;
pub mod error;
pub mod filter;
pub mod knockoff;
pub mod numerics;
pub mod paired;
pub mod procedures;
pub mod sim;
pub mod svg;

pub use error::{Error, Result};
