//! Dense linear algebra: Hermitian eigendecomposition and pivoted real solves.
//!
//! Shift-rule systems are real (sine entries); complex arithmetic only appears
//! in quantum state math.

mod eig;
mod lu;
mod matrix;

use serde::{Deserialize, Serialize};

pub use eig::{hermitian_eig, hermitian_eig_with, EigenDecomposition};
pub use lu::{determinant, invert, invert_with, solve_linear, solve_linear_with, LuFactorization};
pub use matrix::{ComplexMatrix, Matrix, RealMatrix};

/// Tolerances shared by the numerics routines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericsConfig {
    /// Relative Hermiticity tolerance, scaled by `max(1, max|M|)`.
    pub hermitian_tol: f64,
    /// Jacobi sweep cap.
    pub eig_max_sweeps: usize,
    /// Pivots below `pivot_tol · max|A|` are treated as singular.
    pub pivot_tol: f64,
    /// Shift matrices with a larger 1-norm condition estimate are rejected.
    pub max_condition: f64,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self { hermitian_tol: 1e-12, eig_max_sweeps: 100, pivot_tol: 1e-13, max_condition: 1e12 }
    }
}
