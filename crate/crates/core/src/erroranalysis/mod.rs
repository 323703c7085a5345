//! How well a pseudo-gap rule reproduces each true gap.
//!
//! For pseudo-gaps `γ` and shifts `δ`, a true gap `Δ` is seen by the truncated rule as
//! `ξ(Δ) = Σ_k γ_k η_k` where `Σ_k sin(δ_i γ_k / 2) η_k = sin(δ_i Δ / 2)`. The error
//! function is `Q_K(Δ) = ξ(Δ) - Δ`. The η system is solved in double-double so that
//! the tiny errors at small shifts remain measurable.

mod ddouble;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{determinant, solve_linear, RealMatrix};
use crate::spectral::{pseudo_gaps, validate_ascending_positive, GapSet, PseudoGapConfig};
use ddouble::{Dd, DdLu};

/// Pivot threshold for the double-double η system.
const DD_PIVOT_TOL: f64 = 1e-28;
/// `|Q_K|` below this is treated as rounding noise in slope fits.
pub const Q_FLOOR: f64 = 1e-26;

/// Factored η system for one pseudo-gap/shift configuration.
#[derive(Debug, Clone)]
pub struct GapApproximation {
    gammas: Vec<f64>,
    shifts: Vec<f64>,
    lu: DdLu,
}

impl GapApproximation {
    pub fn new(gammas: &[f64], shifts: &[f64]) -> Result<Self> {
        validate_config(gammas, shifts)?;
        let k = gammas.len();
        let a: Vec<Dd> = (0..k * k).map(|idx| half_angle_sin(shifts[idx / k], gammas[idx % k])).collect();
        let lu = DdLu::new(a, k, DD_PIVOT_TOL).ok_or_else(|| Error::SingularSystem {
            condition_estimate: f64::INFINITY,
        })?;
        Ok(Self { gammas: gammas.to_vec(), shifts: shifts.to_vec(), lu })
    }

    pub fn k(&self) -> usize {
        self.gammas.len()
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn shifts(&self) -> &[f64] {
        &self.shifts
    }

    fn eta_dd(&self, delta: f64) -> Vec<Dd> {
        let rhs: Vec<Dd> = self.shifts.iter().map(|&s| half_angle_sin(s, delta)).collect();
        self.lu.solve(&rhs)
    }

    pub fn eta(&self, delta: f64) -> Vec<f64> {
        self.eta_dd(delta).into_iter().map(Dd::to_f64).collect()
    }

    fn xi_dd(&self, delta: f64) -> Dd {
        self.eta_dd(delta)
            .into_iter()
            .zip(&self.gammas)
            .fold(Dd::ZERO, |acc, (e, &g)| acc + e.mul_f64(g))
    }

    pub fn xi(&self, delta: f64) -> f64 {
        self.xi_dd(delta).to_f64()
    }

    /// `ξ(Δ) - Δ`, with the subtraction done before rounding to f64.
    pub fn q(&self, delta: f64) -> f64 {
        (self.xi_dd(delta) - Dd::new(delta)).to_f64()
    }
}

fn half_angle_sin(shift: f64, gap: f64) -> Dd {
    Dd::prod(shift, gap).mul_f64(0.5).sin()
}

fn validate_config(gammas: &[f64], shifts: &[f64]) -> Result<()> {
    if gammas.is_empty() {
        return Err(Error::invalid("need at least one pseudo-gap"));
    }
    if gammas.len() != shifts.len() {
        return Err(Error::DimensionMismatch(format!("{} pseudo-gaps vs {} shifts", gammas.len(), shifts.len())));
    }
    validate_ascending_positive(gammas, "pseudo-gap")?;
    validate_ascending_positive(shifts, "shift")
}

pub fn xi(delta: f64, gammas: &[f64], shifts: &[f64]) -> Result<f64> {
    Ok(GapApproximation::new(gammas, shifts)?.xi(delta))
}

pub fn q_error(delta: f64, gammas: &[f64], shifts: &[f64]) -> Result<f64> {
    Ok(GapApproximation::new(gammas, shifts)?.q(delta))
}

/// `ξ` from a plain f64 pivoted solve of the η system.
pub fn xi_f64(delta: f64, gammas: &[f64], shifts: &[f64]) -> Result<f64> {
    validate_config(gammas, shifts)?;
    let a = RealMatrix::from_fn(shifts.len(), gammas.len(), |i, k| (0.5 * shifts[i] * gammas[k]).sin());
    let rhs: Vec<f64> = shifts.iter().map(|s| (0.5 * s * delta).sin()).collect();
    let eta = solve_linear(&a, &rhs)?;
    Ok(eta.iter().zip(gammas).map(|(e, g)| e * g).sum())
}

/// `ξ = Σ_k γ_k det(A_k) / det(M)` with `A_k` the shift matrix whose column k holds the Δ column.
pub fn xi_cramer(delta: f64, gammas: &[f64], shifts: &[f64]) -> Result<f64> {
    validate_config(gammas, shifts)?;
    let m = RealMatrix::from_fn(shifts.len(), gammas.len(), |i, k| 4.0 * (0.5 * shifts[i] * gammas[k]).sin());
    let det_m = determinant(&m)?;
    if det_m == 0.0 {
        return Err(Error::SingularSystem { condition_estimate: f64::INFINITY });
    }
    let mut total = 0.0;
    for (k, &g) in gammas.iter().enumerate() {
        let mut a = m.clone();
        for (i, &s) in shifts.iter().enumerate() {
            a[(i, k)] = 4.0 * (0.5 * s * delta).sin();
        }
        total += g * determinant(&a)? / det_m;
    }
    Ok(total)
}

/// Sampled `Q_K(Δ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorFunctionCurve {
    #[serde(rename = "K")]
    pub k: usize,
    pub pseudo_gaps: Vec<f64>,
    pub shifts: Vec<f64>,
    pub samples: Vec<(f64, f64)>,
}

impl ErrorFunctionCurve {
    pub fn sample(gammas: &[f64], shifts: &[f64], deltas: &[f64]) -> Result<Self> {
        let approx = GapApproximation::new(gammas, shifts)?;
        Ok(Self {
            k: gammas.len(),
            pseudo_gaps: gammas.to_vec(),
            shifts: shifts.to_vec(),
            samples: deltas.iter().map(|&d| (d, approx.q(d))).collect(),
        })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["delta", "qk"])?;
        for (d, q) in &self.samples {
            out.write_record([format!("{d:.17e}"), format!("{q:.17e}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Leading small-shift term of `Q_K` for `K ≤ 3`, in terms of the actual shifts.
pub fn leading_error_term(delta: f64, gammas: &[f64], shifts: &[f64]) -> Option<f64> {
    let d2: f64 = shifts.iter().map(|s| s * s).product();
    let f = |g: f64| g * g - delta * delta;
    match gammas.len() {
        1 => Some(d2 * delta * f(gammas[0]) / 24.0),
        2 => Some(-d2 * delta * f(gammas[0]) * f(gammas[1]) / 1920.0),
        3 => Some(d2 * delta * f(gammas[0]) * f(gammas[1]) * f(gammas[2]) / 322_560.0),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionTrial {
    pub delta: f64,
    pub gammas: Vec<f64>,
    /// Shift profile `δ'`; actual shifts are `α δ'`.
    pub profile: Vec<f64>,
    pub slope: f64,
    /// `Q_K / leading term - 1` at the smallest α.
    pub coefficient_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    #[serde(rename = "K")]
    pub k: usize,
    pub alphas: Vec<f64>,
    pub trials: Vec<ExpansionTrial>,
    pub mean_slope: f64,
    pub max_slope_deviation: f64,
    pub max_coefficient_rel_error: f64,
}

pub fn geomspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Fits `log|Q_K|` against `log α` over `α ∈ [0.02, 0.2]` for random draws of
/// `Δ, γ ∈ [0.5, 3]` and `δ' ∈ [0.5, 1.5]`, and compares `Q_K` at `α = 0.02`
/// with the closed-form leading term. Draws with `Δ` within 0.25 of a pseudo-gap, or
/// pseudo-gaps closer than 0.25, are redrawn.
pub fn verify_expansion_orders(k: usize, trials: usize, seed: u64) -> Result<ExpansionReport> {
    if !(1..=3).contains(&k) {
        return Err(Error::Unsupported(format!("closed-form error terms exist for K = 1, 2, 3, not {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alphas = geomspace(0.02, 0.2, 10);
    let log_a: Vec<f64> = alphas.iter().map(|a| a.ln()).collect();
    let mut out = Vec::with_capacity(trials);
    while out.len() < trials {
        let mut gammas: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..3.0)).collect();
        gammas.sort_by(f64::total_cmp);
        let delta: f64 = rng.random_range(0.5..3.0);
        let mut profile: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..1.5)).collect();
        profile.sort_by(f64::total_cmp);
        if gammas.windows(2).any(|w| w[1] - w[0] < 0.25)
            || gammas.iter().any(|g| (g - delta).abs() < 0.25)
            || profile.windows(2).any(|w| w[1] - w[0] < 1e-3)
        {
            continue;
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut first_q = None;
        for (&a, &la) in alphas.iter().zip(&log_a) {
            let shifts: Vec<f64> = profile.iter().map(|p| a * p).collect();
            let q = GapApproximation::new(&gammas, &shifts)?.q(delta);
            first_q.get_or_insert((q, shifts));
            if q.abs() > Q_FLOOR {
                xs.push(la);
                ys.push(q.abs().ln());
            }
        }
        if xs.len() < 3 {
            continue;
        }
        let (q0, shifts0) = first_q.expect("alphas nonempty");
        let lead = leading_error_term(delta, &gammas, &shifts0).expect("k checked");
        out.push(ExpansionTrial {
            delta,
            gammas,
            profile,
            slope: fit_slope(&xs, &ys),
            coefficient_rel_error: q0 / lead - 1.0,
        });
    }
    let target = 2.0 * k as f64;
    let mean_slope = out.iter().map(|t| t.slope).sum::<f64>() / out.len().max(1) as f64;
    let max_slope_deviation = out.iter().map(|t| (t.slope - target).abs()).fold(0.0, f64::max);
    let max_coefficient_rel_error = out.iter().map(|t| t.coefficient_rel_error.abs()).fold(0.0, f64::max);
    Ok(ExpansionReport { k, alphas, trials: out, mean_slope, max_slope_deviation, max_coefficient_rel_error })
}

/// `Σ_s m_s Q_K(Δ_s)²` over the true gap set; lower is better.
pub fn score_pseudo_gaps(gaps: &GapSet, cfg: &PseudoGapConfig, shifts: &[f64]) -> Result<f64> {
    let gammas = pseudo_gaps(cfg)?;
    score_gammas(gaps, &gammas, shifts)
}

pub fn score_gammas(gaps: &GapSet, gammas: &[f64], shifts: &[f64]) -> Result<f64> {
    let approx = GapApproximation::new(gammas, shifts)?;
    Ok(gaps
        .gaps
        .iter()
        .zip(&gaps.multiplicities)
        .map(|(&d, &m)| {
            let q = approx.q(d);
            m as f64 * q * q
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    #[test]
    fn xi_at_pseudo_gap_is_exact() {
        let g = [0.7, 1.9, 2.6];
        let s = [0.2, 0.5, 0.9];
        for &d in &g {
            assert!(q_error(d, &g, &s).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn single_gap_closed_form() {
        let x = xi(1.0, &[2.0], &[0.1]).unwrap();
        let closed = 2.0 * 0.05f64.sin() / 0.1f64.sin();
        assert!((x - closed).abs() < 1e-15);
        let lead = leading_error_term(1.0, &[2.0], &[0.1]).unwrap();
        assert!((lead - 0.00125).abs() < 1e-15);
        assert!(((x - 1.0) / lead - 1.0).abs() < 1e-2);
    }

    #[test]
    fn two_gap_leading_term() {
        let (g, p, d) = ([1.0, 2.5], [0.8, 1.3], 1.7);
        let a = 0.05;
        let s: Vec<f64> = p.iter().map(|v| a * v).collect();
        let q = q_error(d, &g, &s).unwrap();
        let lead = leading_error_term(d, &g, &s).unwrap();
        assert!((q / lead - 1.0).abs() < 0.1, "{q} vs {lead}");
    }

    #[test]
    fn zero_gap_gives_zero() {
        assert_eq!(q_error(0.0, &[0.1, 1.0, 2.0], &[0.3, 0.5, 0.7]).unwrap(), 0.0);
    }

    #[test]
    fn odd_in_delta() {
        let (g, s) = ([0.5, 1.5], [0.4, 0.8]);
        for &d in &[0.3, 1.1, 4.0] {
            let a = q_error(d, &g, &s).unwrap();
            let b = q_error(-d, &g, &s).unwrap();
            assert!((a + b).abs() < 1e-14);
        }
    }

    #[test]
    fn figure_one_configuration_is_accurate_inside_range() {
        let gammas = pseudo_gaps(&PseudoGapConfig::epsilon_integer(3, 0.1)).unwrap();
        let shifts = linspace(FRAC_PI_4, FRAC_PI_2, 3);
        let inside = ErrorFunctionCurve::sample(&gammas, &shifts, &linspace(0.0, 2.0, 41)).unwrap();
        let worst_inside = inside.samples.iter().map(|(_, q)| q.abs()).fold(0.0, f64::max);
        let outside = q_error(5.0, &gammas, &shifts).unwrap().abs();
        assert!(outside > 100.0 * worst_inside, "{outside} vs {worst_inside}");
    }

    #[test]
    fn cramer_and_solve_agree() {
        for k in 1..=6 {
            let a = 0.9;
            let g: Vec<f64> = (1..=k).map(|j| a * j as f64).collect();
            let s: Vec<f64> = (1..=k).map(|j| 2.0 * PI * j as f64 / ((2 * k + 1) as f64 * a)).collect();
            for &d in &[0.8, 2.0, 3.5, 7.3] {
                let x = xi(d, &g, &s).unwrap();
                assert!((xi_cramer(d, &g, &s).unwrap() - x).abs() < 1e-9, "K={k} Δ={d}");
                assert!((xi_f64(d, &g, &s).unwrap() - x).abs() < 1e-9, "K={k} Δ={d}");
            }
        }
    }

    #[test]
    fn expansion_orders() {
        for k in 1..=3 {
            let rep = verify_expansion_orders(k, 5, 17).unwrap();
            assert!(rep.max_slope_deviation < 0.3, "K={k}: {rep:?}");
            assert!(rep.max_coefficient_rel_error < 0.1, "K={k}: {rep:?}");
        }
        assert!(verify_expansion_orders(4, 1, 0).is_err());
    }

    #[test]
    fn score_vanishes_for_true_gaps() {
        let gaps = GapSet::new(vec![1.0, 2.0, 3.5], vec![2, 1, 1]).unwrap();
        let s = [0.2, 0.4, 0.6];
        assert!(score_pseudo_gaps(&gaps, &PseudoGapConfig::explicit(gaps.gaps.clone()), &s).unwrap() < 1e-16);
        let single = GapSet::from_gaps(vec![2.0]).unwrap();
        assert!(score_pseudo_gaps(&single, &PseudoGapConfig::explicit(vec![2.0]), &[0.3]).unwrap() < 1e-30);
    }

    #[test]
    fn curve_csv() {
        let c = ErrorFunctionCurve::sample(&[2.0], &[0.5], &[0.0, 2.0]).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("delta,qk\n"));
        assert_eq!(c.samples[0].1, 0.0);
        assert!(c.samples[1].1.abs() < 1e-15);
    }
}
