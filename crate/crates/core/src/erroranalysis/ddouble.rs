//! Minimal double-double arithmetic (about 32 significant digits).
//!
//! The gap-approximation error `ξ - Δ` shrinks like `α^{2K}` while the η system
//! becomes ill-conditioned like `α^{-2(K-1)}`, so plain f64 loses the signal
//! long before the expansion regime is reached.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const TWO_PI: Dd = Dd { hi: 6.283_185_307_179_586, lo: 2.449_293_598_294_706_4e-16 };
const HALF_PI: Dd = Dd { hi: 1.570_796_326_794_896_6, lo: 6.123_233_995_736_766e-17 };

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    pub fn new(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn mul_f64(self, b: f64) -> Self {
        let p = self.hi * b;
        let e = self.hi.mul_add(b, -p) + self.lo * b;
        let (s, e) = quick_two_sum(p, e);
        Dd { hi: s, lo: e }
    }

    /// Exact product of two doubles.
    pub fn prod(a: f64, b: f64) -> Self {
        let p = a * b;
        Dd { hi: p, lo: a.mul_add(b, -p) }
    }

    /// `(sin x, cos x)`: reduction by 2π and π/2, then Taylor series on `|r| ≤ π/4`.
    pub fn sin_cos(self) -> (Dd, Dd) {
        let k = (self.hi / TWO_PI.hi).round();
        let mut r = self - TWO_PI.mul_f64(k);
        let j = (r.hi / HALF_PI.hi).round();
        r = r - HALF_PI.mul_f64(j);
        let (s, c) = taylor_sin_cos(r);
        match (j as i64).rem_euclid(4) {
            0 => (s, c),
            1 => (c, -s),
            2 => (-s, -c),
            _ => (-c, s),
        }
    }

    pub fn sin(self) -> Dd {
        self.sin_cos().0
    }
}

fn taylor_sin_cos(r: Dd) -> (Dd, Dd) {
    let r2 = r * r;
    let mut sin = r;
    let mut term = r;
    let mut n = 1.0;
    loop {
        term = -(term * r2) / Dd::new((n + 1.0) * (n + 2.0));
        n += 2.0;
        sin = sin + term;
        if term.hi.abs() <= 1e-34 * sin.hi.abs().max(1e-300) || n > 60.0 {
            break;
        }
    }
    let mut cos = Dd::new(1.0);
    let mut term = Dd::new(1.0);
    let mut n = 0.0;
    loop {
        term = -(term * r2) / Dd::new((n + 1.0) * (n + 2.0));
        n += 2.0;
        cos = cos + term;
        if term.hi.abs() <= 1e-34 || n > 60.0 {
            break;
        }
    }
    (sin, cos)
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let p = self.hi * b.hi;
        let e = self.hi.mul_add(b.hi, -p) + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b.mul_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b.mul_f64(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::new(q3)
    }
}

/// Gaussian elimination with partial pivoting in double-double.
#[derive(Debug, Clone)]
pub(crate) struct DdLu {
    n: usize,
    lu: Vec<Dd>,
    perm: Vec<usize>,
}

impl DdLu {
    /// `None` when a pivot falls below `rel_tol · max|a|`.
    pub fn new(mut a: Vec<Dd>, n: usize, rel_tol: f64) -> Option<Self> {
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.hi.abs()));
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| a[i * n + k].hi.abs().total_cmp(&a[j * n + k].hi.abs()))?;
            let pivot = a[p * n + k].hi.abs();
            if pivot == 0.0 || pivot <= rel_tol * scale {
                return None;
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let d = a[k * n + k];
            for i in k + 1..n {
                let f = a[i * n + k] / d;
                a[i * n + k] = f;
                for j in k + 1..n {
                    a[i * n + j] = a[i * n + j] - f * a[k * n + j];
                }
            }
        }
        Some(Self { n, lu: a, perm })
    }

    pub fn solve(&self, b: &[Dd]) -> Vec<Dd> {
        let n = self.n;
        let mut x: Vec<Dd> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] = x[i] - self.lu[i * n + j] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] = x[i] - self.lu[i * n + j] * x[j];
            }
            x[i] = x[i] / self.lu[i * n + i];
        }
        x
    }
}
