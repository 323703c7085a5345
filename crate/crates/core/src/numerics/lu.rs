use super::matrix::RealMatrix;
use super::NumericsConfig;
use crate::error::{Error, Result};

/// LU factorization with partial (row) pivoting, `P A = L U`.
#[derive(Debug, Clone)]
pub struct LuFactorization {
    lu: RealMatrix,
    perm: Vec<usize>,
    sign: f64,
    norm_one: f64,
}

impl LuFactorization {
    /// Factor `a`, rejecting pivots below `cfg.pivot_tol · max|a|`.
    pub fn new(a: &RealMatrix, cfg: &NumericsConfig) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch(format!("LU needs a square matrix, got {}x{}", a.rows(), a.cols())));
        }
        let n = a.rows();
        let scale = a.max_abs();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;

        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot <= cfg.pivot_tol * scale || pivot == 0.0 {
                let condition_estimate = if pivot > 0.0 { scale / pivot } else { f64::INFINITY };
                return Err(Error::SingularSystem { condition_estimate });
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let inv = 1.0 / lu[(k, k)];
            for i in k + 1..n {
                let factor = lu[(i, k)] * inv;
                lu[(i, k)] = factor;
                if factor != 0.0 {
                    for j in k + 1..n {
                        let u = lu[(k, j)];
                        lu[(i, j)] -= factor * u;
                    }
                }
            }
        }
        Ok(Self { lu, perm, sign, norm_one: a.norm_one() })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::DimensionMismatch(format!("rhs has length {}, system has {}", b.len(), n)));
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        Ok(x)
    }

    /// Solve `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::DimensionMismatch(format!("rhs has length {}, system has {}", b.len(), n)));
        }
        // Aᵀ = Uᵀ Lᵀ P
        let mut w = b.to_vec();
        for i in 0..n {
            let mut s = w[i];
            for j in 0..i {
                s -= self.lu[(j, i)] * w[j];
            }
            w[i] = s / self.lu[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = w[i];
            for j in i + 1..n {
                s -= self.lu[(j, i)] * w[j];
            }
            w[i] = s;
        }
        let mut x = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = w[k];
        }
        Ok(x)
    }

    /// Smallest `|U_kk|`.
    pub fn min_abs_pivot(&self) -> f64 {
        (0..self.dim()).map(|i| self.lu[(i, i)].abs()).fold(f64::INFINITY, f64::min)
    }

    pub fn determinant(&self) -> f64 {
        (0..self.dim()).map(|i| self.lu[(i, i)]).product::<f64>() * self.sign
    }

    pub fn inverse(&self) -> RealMatrix {
        let n = self.dim();
        let mut inv = RealMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e).expect("dimension checked");
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }

    /// 1-norm condition number estimate, `‖A‖₁ · est(‖A⁻¹‖₁)` (Hager's method).
    pub fn condition_estimate(&self) -> f64 {
        let n = self.dim();
        if n == 0 {
            return 1.0;
        }
        let mut x = vec![1.0 / n as f64; n];
        let mut estimate = 0.0;
        for _ in 0..5 {
            let y = self.solve(&x).expect("dimension checked");
            estimate = y.iter().map(|v| v.abs()).sum::<f64>();
            let xi: Vec<f64> = y.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect();
            let z = self.solve_transpose(&xi).expect("dimension checked");
            let (j, zmax) = z
                .iter()
                .enumerate()
                .fold((0, -1.0), |best, (i, v)| if v.abs() > best.1 { (i, v.abs()) } else { best });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
            if zmax <= ztx {
                break;
            }
            x.iter_mut().for_each(|v| *v = 0.0);
            x[j] = 1.0;
        }
        // Second estimate from an alternating-sign vector guards against Hager's known failure modes.
        let alt: Vec<f64> = (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                s * (1.0 + i as f64 / (n.max(2) - 1) as f64)
            })
            .collect();
        let y = self.solve(&alt).expect("dimension checked");
        let alt_est = 2.0 * y.iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64);
        self.norm_one * estimate.max(alt_est)
    }
}

pub fn solve_linear(a: &RealMatrix, b: &[f64]) -> Result<Vec<f64>> {
    solve_linear_with(a, b, &NumericsConfig::default())
}

pub fn solve_linear_with(a: &RealMatrix, b: &[f64], cfg: &NumericsConfig) -> Result<Vec<f64>> {
    if a.rows() != b.len() {
        return Err(Error::DimensionMismatch(format!("matrix has {} rows, rhs has {}", a.rows(), b.len())));
    }
    LuFactorization::new(a, cfg)?.solve(b)
}

pub fn invert(a: &RealMatrix) -> Result<RealMatrix> {
    invert_with(a, &NumericsConfig::default())
}

pub fn invert_with(a: &RealMatrix, cfg: &NumericsConfig) -> Result<RealMatrix> {
    Ok(LuFactorization::new(a, cfg)?.inverse())
}

/// Determinant via pivoted elimination; exactly singular input gives 0.
pub fn determinant(a: &RealMatrix) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!("determinant of {}x{} matrix", a.rows(), a.cols())));
    }
    let n = a.rows();
    let mut m = a.clone();
    let mut det = 1.0;
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| m[(i, k)].abs().total_cmp(&m[(j, k)].abs())).unwrap_or(k);
        if m[(p, k)] == 0.0 {
            return Ok(0.0);
        }
        if p != k {
            for j in 0..n {
                let tmp = m[(k, j)];
                m[(k, j)] = m[(p, j)];
                m[(p, j)] = tmp;
            }
            det = -det;
        }
        let pivot = m[(k, k)];
        det *= pivot;
        for i in k + 1..n {
            let factor = m[(i, k)] / pivot;
            for j in k + 1..n {
                let u = m[(k, j)];
                m[(i, j)] -= factor * u;
            }
        }
    }
    Ok(det)
}
