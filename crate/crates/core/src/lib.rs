//! Derivatives of quantum expectation functions by parameter-shift rules.
//!
//! The crate covers the exact generalized shift rule over all spectral gaps of a
//! generator, its approximate variant over a handful of pseudo-gaps, the error and
//! shot-noise variance analysis of both, and a small VQE harness that counts
//! expectation calls.

pub mod erroranalysis;
pub mod error;
pub mod experiments;
pub mod numerics;
pub mod quantum;
pub mod shiftrules;
pub mod spectral;
pub mod varianceopt;
pub mod vqe;

pub use error::{Error, Result};
