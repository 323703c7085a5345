use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::matrix::ComplexMatrix;
use super::NumericsConfig;
use crate::error::{Error, Result};

/// Eigenvalues in ascending order with the matching unit eigenvectors stored as columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V diag(λ) V†`.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let n = self.dim();
        let v = &self.eigenvectors;
        ComplexMatrix::from_fn(n, n, |i, j| {
            (0..n).map(|k| v[(i, k)] * self.eigenvalues[k] * v[(j, k)].conj()).sum()
        })
    }

    /// `max |M - V diag(λ) V†|`.
    pub fn reconstruction_residual(&self, m: &ComplexMatrix) -> f64 {
        m.sub(&self.reconstruct()).max_abs()
    }

    /// `max |V†V - I|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let v = &self.eigenvectors;
        v.adjoint().matmul(v).sub(&ComplexMatrix::identity(self.dim())).max_abs()
    }
}

/// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi rotations.
pub fn hermitian_eig(m: &ComplexMatrix) -> Result<EigenDecomposition> {
    hermitian_eig_with(m, &NumericsConfig::default())
}

pub fn hermitian_eig_with(m: &ComplexMatrix, cfg: &NumericsConfig) -> Result<EigenDecomposition> {
    if !m.is_square() || m.rows() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition needs a non-empty square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let defect = m.hermitian_defect();
    if defect > cfg.hermitian_tol * m.max_abs().max(1.0) {
        return Err(Error::NotHermitian { defect });
    }

    let n = m.rows();
    // Work on the exactly Hermitian part so rounding noise in the input cannot stall the sweeps.
    let mut a = ComplexMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)].conj()));
    let mut v = ComplexMatrix::identity(n);

    let frob: f64 = a.as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let target = f64::EPSILON * frob.max(f64::MIN_POSITIVE);

    let mut converged = n == 1;
    for _sweep in 0..cfg.eig_max_sweeps {
        if off_diagonal_norm(&a) <= target {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }
    if !converged && off_diagonal_norm(&a) > target {
        return Err(Error::NoConvergence { iterations: cfg.eig_max_sweeps });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let eigenvalues = order.iter().map(|&i| a[(i, i)].re).collect();
    let eigenvectors = ComplexMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(EigenDecomposition { eigenvalues, eigenvectors })
}

fn off_diagonal_norm(a: &ComplexMatrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Zero `a[p][q]` with the unitary `R = [[c, s], [-s·ē, c·ē]]` where `e` is the phase of `a[p][q]`.
fn rotate(a: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let mag = apq.norm();
    if mag == 0.0 {
        return;
    }
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    if mag <= f64::EPSILON * 1e-3 * (app.abs() + aqq.abs()) {
        a[(p, q)] = Complex64::new(0.0, 0.0);
        a[(q, p)] = Complex64::new(0.0, 0.0);
        return;
    }
    let e = apq / mag;
    let ebar = e.conj();
    let tau = (aqq - app) / (2.0 * mag);
    let t = if tau >= 0.0 { 1.0 } else { -1.0 } / (tau.abs() + (1.0 + tau * tau).sqrt());
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;

    let n = a.rows();
    // A <- A R
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * c - akq * (ebar * s);
        a[(k, q)] = akp * s + akq * (ebar * c);
    }
    // A <- R† A
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = apk * c - aqk * (e * s);
        a[(q, k)] = apk * s + aqk * (e * c);
    }
    a[(p, q)] = Complex64::new(0.0, 0.0);
    a[(q, p)] = Complex64::new(0.0, 0.0);
    a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);
    // V <- V R
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * c - vkq * (ebar * s);
        v[(k, q)] = vkp * s + vkq * (ebar * c);
    }
}
