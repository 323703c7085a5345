//! Shot-noise variance of shift-rule derivatives and variance-minimizing shifts.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::erroranalysis::score_gammas;
use crate::error::{Error, Result};
use crate::numerics::{LuFactorization, NumericsConfig};
use crate::quantum::{ExpectationProblem, Generator, ShotModel};
use crate::shiftrules::{build_shift_matrix, splitmix64, SHIFT_MATRIX_SCALE, ExpectationFn, RuleKind, ShiftRuleSpec, ShiftSchedule};
use crate::spectral::GapSet;

/// `Σ_s Σ_k g_s² a_sk²` with `a = M⁻¹`; `+∞` when `M` is singular.
pub fn g_objective(gaps: &[f64], shifts: &[f64]) -> f64 {
    if gaps.is_empty() || gaps.len() != shifts.len() {
        return f64::INFINITY;
    }
    let cfg = NumericsConfig::default();
    let lu = match LuFactorization::new(&build_shift_matrix(gaps, shifts), &cfg) {
        Ok(lu) if lu.min_abs_pivot() > SHIFT_MATRIX_SCALE * cfg.pivot_tol => lu,
        _ => return f64::INFINITY,
    };
    let a = lu.inverse();
    let mut g = 0.0;
    for (s, &gap) in gaps.iter().enumerate() {
        g += gap * gap * a.row(s).iter().map(|v| v * v).sum::<f64>();
    }
    if g.is_finite() {
        g
    } else {
        f64::INFINITY
    }
}

/// `Σ_k (Σ_s g_s a_sk)²`: the same propagation as [`g_objective`] but keeping the
/// cross terms between different `R_s`, which share the same measured differences.
pub fn g_correlated(gaps: &[f64], shifts: &[f64]) -> f64 {
    if gaps.is_empty() || gaps.len() != shifts.len() {
        return f64::INFINITY;
    }
    let cfg = NumericsConfig::default();
    let lu = match LuFactorization::new(&build_shift_matrix(gaps, shifts), &cfg) {
        Ok(lu) if lu.min_abs_pivot() > SHIFT_MATRIX_SCALE * cfg.pivot_tol => lu,
        _ => return f64::INFINITY,
    };
    // Row vector gᵀ M⁻¹ = (M⁻ᵀ g)ᵀ.
    match lu.solve_transpose(gaps) {
        Ok(w) => w.iter().map(|v| v * v).sum(),
        Err(_) => f64::INFINITY,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariancePrediction {
    pub sigma0_sq: f64,
    /// `None` for exact expectation values.
    pub n_shots: Option<u64>,
    pub g_value: f64,
    pub sigma_d_sq: f64,
    pub g_correlated: f64,
    /// Variance including the cross terms; what a Monte Carlo run actually measures.
    pub sigma_d_sq_correlated: f64,
}

/// `σ_d² = 2 σ0² g / N_shots`; zero for an infinite-shot model.
pub fn predict_variance(spec: &ShiftRuleSpec, sigma0_sq: f64) -> Result<VariancePrediction> {
    spec.validate()?;
    if !(sigma0_sq >= 0.0) {
        return Err(Error::invalid(format!("sigma0^2 must be non-negative, got {sigma0_sq}")));
    }
    let g_value = g_objective(&spec.gaps, &spec.shifts);
    if !g_value.is_finite() {
        return Err(Error::SingularShiftRule { condition_estimate: f64::INFINITY });
    }
    let g_corr = g_correlated(&spec.gaps, &spec.shifts);
    let n_shots = spec.shot_model.n_shots();
    let (sigma_d_sq, sigma_d_sq_correlated) = match n_shots {
        Some(n) => (2.0 * sigma0_sq / n as f64 * g_value, 2.0 * sigma0_sq / n as f64 * g_corr),
        None => (0.0, 0.0),
    };
    Ok(VariancePrediction { sigma0_sq, n_shots, g_value, sigma_d_sq, g_correlated: g_corr, sigma_d_sq_correlated })
}

/// Variance of one measurement of `C` at `x`, taken as constant over all shifts.
pub fn estimate_sigma0_sq(problem: &ExpectationProblem, x: f64) -> f64 {
    problem.variance(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftBounds {
    pub lo: f64,
    pub hi: f64,
}

impl ShiftBounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::invalid(format!("shift bounds must satisfy 0 < lo < hi, got ({lo}, {hi})")));
        }
        Ok(Self { lo, hi })
    }

    /// `(0.01, π / g_max]`.
    pub fn default_for(gaps: &[f64]) -> Self {
        let gmax = gaps.iter().copied().fold(0.0, f64::max);
        Self { lo: 0.01, hi: (PI / gmax).max(0.02) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftOptimizationReport {
    pub gaps: Vec<f64>,
    pub bounds: ShiftBounds,
    pub initial_shifts: Vec<f64>,
    pub optimal_shifts: Vec<f64>,
    pub initial_g: f64,
    pub optimal_g: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<String>,
}

/// Clamp into the bounds, sort, and keep neighbours at least `sep` apart.
fn repair(x: &[f64], b: ShiftBounds) -> Vec<f64> {
    let k = x.len();
    let sep = ((b.hi - b.lo) / (1e3 * k as f64)).min(1e-6);
    let mut v: Vec<f64> = x.iter().map(|&s| if s.is_finite() { s.clamp(b.lo, b.hi) } else { b.lo }).collect();
    v.sort_by(f64::total_cmp);
    for i in 1..k {
        if v[i] - v[i - 1] < sep {
            v[i] = v[i - 1] + sep;
        }
    }
    if v[k - 1] > b.hi {
        v[k - 1] = b.hi;
        for i in (0..k - 1).rev() {
            if v[i + 1] - v[i] < sep {
                v[i] = v[i + 1] - sep;
            }
        }
    }
    v
}

struct NelderMead {
    max_iter: usize,
    x_tol: f64,
    f_tol: f64,
}

impl NelderMead {
    /// Minimizes `f` from `x0`; returns the best point, its value and the iteration count.
    fn run(&self, f: &dyn Fn(&[f64]) -> f64, x0: &[f64], step: f64) -> (Vec<f64>, f64, usize, bool) {
        let n = x0.len();
        let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
        for i in 0..n {
            let mut p = x0.to_vec();
            p[i] += step;
            simplex.push(p);
        }
        let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
        let mut iter = 0;
        let mut converged = false;
        while iter < self.max_iter {
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            values = order.iter().map(|&i| values[i]).collect();

            let spread = values[n] - values[0];
            let size = simplex[1..]
                .iter()
                .map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            if (spread.is_finite() && spread <= self.f_tol * values[0].abs().max(1e-300)) && size <= self.x_tol {
                converged = true;
                break;
            }
            if size <= self.x_tol * 1e-3 {
                converged = values[0].is_finite();
                break;
            }
            iter += 1;

            let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
            let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&simplex[n]).map(|(c, w)| c + t * (c - w)).collect() };
            let xr = along(1.0);
            let fr = f(&xr);
            if fr < values[0] {
                let xe = along(2.0);
                let fe = f(&xe);
                if fe < fr {
                    simplex[n] = xe;
                    values[n] = fe;
                } else {
                    simplex[n] = xr;
                    values[n] = fr;
                }
            } else if fr < values[n - 1] {
                simplex[n] = xr;
                values[n] = fr;
            } else {
                let (xc, fc) = if fr < values[n] {
                    let xc = along(0.5);
                    let fc = f(&xc);
                    (xc, fc)
                } else {
                    let xc = along(-0.5);
                    let fc = f(&xc);
                    (xc, fc)
                };
                if fc < values[n].min(fr) {
                    simplex[n] = xc;
                    values[n] = fc;
                } else {
                    let best = simplex[0].clone();
                    for i in 1..=n {
                        simplex[i] = best.iter().zip(&simplex[i]).map(|(b, p)| b + 0.5 * (p - b)).collect();
                        values[i] = f(&simplex[i]);
                    }
                }
            }
        }
        let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
        (simplex[best].clone(), values[best], iter, converged)
    }
}

/// Nelder–Mead on `g` with bound/ordering repair. Never reports a point worse than the start.
pub fn optimize_shifts(gaps: &[f64], initial_shifts: &[f64], bounds: ShiftBounds) -> Result<ShiftOptimizationReport> {
    if gaps.len() != initial_shifts.len() || gaps.is_empty() {
        return Err(Error::DimensionMismatch(format!("{} gaps vs {} shifts", gaps.len(), initial_shifts.len())));
    }
    ShiftBounds::new(bounds.lo, bounds.hi)?;
    let start = repair(initial_shifts, bounds);
    let initial_g = g_objective(gaps, initial_shifts);
    let objective = |x: &[f64]| g_objective(gaps, &repair(x, bounds));
    let nm = NelderMead { max_iter: 500 * (gaps.len() + 1), x_tol: 1e-10, f_tol: 1e-14 };

    let mut best = start.clone();
    let mut best_g = objective(&start);
    let mut iterations = 0;
    let mut converged = false;
    let mut step = 0.1 * (bounds.hi - bounds.lo);
    for _ in 0..4 {
        let (x, gx, it, conv) = nm.run(&objective, &best, step);
        iterations += it;
        let x = repair(&x, bounds);
        let improved = gx < best_g;
        if gx <= best_g {
            best = x;
            best_g = gx;
        }
        converged = conv;
        if !improved && conv {
            break;
        }
        step *= 0.1;
    }

    let mut diagnostics = None;
    let (optimal_shifts, optimal_g) = if best_g <= initial_g || !initial_g.is_finite() {
        (best, best_g)
    } else {
        (initial_shifts.to_vec(), initial_g)
    };
    if !optimal_g.is_finite() {
        converged = false;
        diagnostics = Some("every visited shift configuration gave a singular shift matrix".into());
    }
    Ok(ShiftOptimizationReport {
        gaps: gaps.to_vec(),
        bounds,
        initial_shifts: initial_shifts.to_vec(),
        optimal_shifts,
        initial_g,
        optimal_g,
        iterations,
        converged,
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub spec: ShiftRuleSpec,
    /// Selected pseudo-gap step; `None` when the true gaps were used.
    pub step: Option<f64>,
    pub gap_score: f64,
    pub optimization: ShiftOptimizationReport,
}

/// Relative steps tried around the requested pseudo-gap step.
pub const STEP_SWEEP: [f64; 7] = [0.5, 0.75, 0.9, 1.0, 1.1, 1.25, 1.5];

/// Pseudo-gaps from a step sweep scored against the true gaps, then variance-optimal shifts.
/// With `K ≥ S` the true gaps are used and the result is an exact GPSR spec.
pub fn full_pipeline(generator: &Generator, k: usize, step_a: f64, bounds: Option<ShiftBounds>) -> Result<PipelineResult> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    if !(step_a > 0.0) {
        return Err(Error::invalid(format!("pseudo-gap step must be positive, got {step_a}")));
    }
    let gaps = GapSet::of(generator);
    if gaps.is_empty() {
        return Err(Error::invalid("generator has no spectral gaps"));
    }
    let default_schedule = ShiftSchedule::default_for(RuleKind::Agpsr);
    let (kind, gammas, step, gap_score) = if k >= gaps.len() {
        (RuleKind::Gpsr, gaps.gaps.clone(), None, 0.0)
    } else {
        let mut best: Option<(f64, f64, Vec<f64>)> = None;
        for rel in STEP_SWEEP {
            let a = step_a * rel;
            let gammas: Vec<f64> = (1..=k).map(|i| i as f64 * a).collect();
            let shifts = default_schedule.shifts(&gammas)?;
            let score = match score_gammas(&gaps, &gammas, &shifts) {
                Ok(s) if s.is_finite() => s,
                _ => continue,
            };
            if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
                best = Some((score, a, gammas));
            }
        }
        let (score, a, gammas) = best.ok_or(Error::SingularShiftRule { condition_estimate: f64::INFINITY })?;
        (RuleKind::Agpsr, gammas, Some(a), score)
    };
    let bounds = bounds.unwrap_or_else(|| ShiftBounds::default_for(&gammas));
    let initial = repair(&default_schedule.shifts(&gammas)?, bounds);
    let optimization = optimize_shifts(&gammas, &initial, bounds)?;
    let spec = ShiftRuleSpec::new(kind, gammas, optimization.optimal_shifts.clone(), ShotModel::exact())?;
    Ok(PipelineResult { spec, step, gap_score, optimization })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloVariance {
    pub n_estimates: usize,
    pub mean: f64,
    pub variance: f64,
}

/// Sample variance of `n` derivative estimates with independent seeds drawn from `base_seed`.
pub fn monte_carlo_variance<F: ExpectationFn + ?Sized>(
    f: &F,
    x: f64,
    spec: &ShiftRuleSpec,
    n: usize,
    base_seed: u64,
) -> Result<MonteCarloVariance> {
    if n < 2 {
        return Err(Error::invalid("need at least two estimates for a variance"));
    }
    let rule = spec.prepare()?;
    let estimates: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let shots = spec.shot_model.with_seed(splitmix64(base_seed.wrapping_add(i as u64)));
            rule.estimate_with_shots(f, x, &shots).map(|r| r.estimate)
        })
        .collect::<Result<_>>()?;
    let mean = estimates.iter().sum::<f64>() / n as f64;
    let variance = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(MonteCarloVariance { n_estimates: n, mean, variance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{pauli_x, HermitianOperator};
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn g_examples() {
        assert!((g_objective(&[2.0], &[FRAC_PI_2]) - 0.25).abs() < 1e-15);
        assert!(g_objective(&[2.0], &[1e-9]) > 1e15);
        assert_eq!(g_objective(&[2.0], &[PI]), f64::INFINITY);
        for &d in &[0.3f64, 0.9, 1.4, 2.2] {
            let closed = 4.0 / (16.0 * d.sin().powi(2));
            assert!((g_objective(&[2.0], &[d]) - closed).abs() < 1e-12 * closed);
        }
    }

    #[test]
    fn correlated_g_matches_paper_g_for_one_gap_and_not_beyond() {
        for &d in &[0.3, 1.0, 1.5] {
            assert!((g_correlated(&[2.0], &[d]) - g_objective(&[2.0], &[d])).abs() < 1e-12);
        }
        let gaps = [1.0, 2.0, 3.0];
        let shifts = [0.2, 0.3, 0.4];
        let a = crate::numerics::invert(&build_shift_matrix(&gaps, &shifts)).unwrap();
        let direct: f64 = (0..3).map(|k| (0..3).map(|s| gaps[s] * a[(s, k)]).sum::<f64>().powi(2)).sum();
        assert!((g_correlated(&gaps, &shifts) - direct).abs() < 1e-9 * direct);
        assert!(g_correlated(&gaps, &shifts) < g_objective(&gaps, &shifts));
    }

    #[test]
    fn g_is_permutation_invariant() {
        let a = g_objective(&[1.0, 2.0, 3.0], &[0.3, 0.6, 0.9]);
        let b = g_objective(&[1.0, 2.0, 3.0], &[0.9, 0.3, 0.6]);
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn predicted_variance_examples() {
        let spec = ShiftRuleSpec::new(RuleKind::Psr, vec![2.0], vec![FRAC_PI_2], ShotModel::finite(100, 0).unwrap()).unwrap();
        let p = predict_variance(&spec, 1.0).unwrap();
        assert!((p.sigma_d_sq - 0.005).abs() < 1e-15);
        assert_eq!(p.sigma_d_sq, 2.0 * p.sigma0_sq / 100.0 * p.g_value);
        let mut spec2 = spec.clone();
        spec2.shot_model = ShotModel::finite(400, 0).unwrap();
        assert!((predict_variance(&spec2, 1.0).unwrap().sigma_d_sq * 4.0 - p.sigma_d_sq).abs() < 1e-18);
        let mut exact = spec;
        exact.shot_model = ShotModel::exact();
        assert_eq!(predict_variance(&exact, 1.0).unwrap().sigma_d_sq, 0.0);
    }

    #[test]
    fn single_gap_optimum() {
        let b = ShiftBounds::new(0.01, PI - 0.01).unwrap();
        let rep = optimize_shifts(&[2.0], &[0.3], b).unwrap();
        assert!((rep.optimal_shifts[0] - FRAC_PI_2).abs() < 1e-3, "{rep:?}");
        assert!((rep.optimal_g - 0.25).abs() < 1e-6);
        let again = optimize_shifts(&[2.0], &[FRAC_PI_2], b).unwrap();
        assert!(again.optimal_g <= again.initial_g);
        assert!((again.optimal_g - 0.25).abs() < 1e-12);
    }

    #[test]
    fn two_gap_optimum_beats_default_and_grid() {
        let gaps = [1.0, 2.0];
        let default = ShiftSchedule::default_for(RuleKind::Agpsr).shifts(&gaps).unwrap();
        let b = ShiftBounds::new(0.01, PI).unwrap();
        let rep = optimize_shifts(&gaps, &default, b).unwrap();
        assert!(rep.optimal_g < g_objective(&gaps, &default));
        let mut grid_best = f64::INFINITY;
        for i in 1..100 {
            for j in i + 1..100 {
                grid_best = grid_best.min(g_objective(&gaps, &[PI * i as f64 / 100.0, PI * j as f64 / 100.0]));
            }
        }
        assert!(rep.optimal_g <= grid_best * (1.0 + 1e-6), "{} vs {grid_best}", rep.optimal_g);
    }

    #[test]
    fn pipeline_on_single_gap_generator() {
        let g = HermitianOperator::new(pauli_x()).unwrap();
        let res = full_pipeline(&g, 1, 2.0, None).unwrap();
        assert!((res.spec.gaps[0] - 2.0).abs() < 1e-12);
        assert!((res.spec.shifts[0] - FRAC_PI_2).abs() < 1e-3);
        assert_eq!(res.gap_score, 0.0);
    }

    #[test]
    fn repair_keeps_order_and_bounds() {
        let b = ShiftBounds::new(0.1, 1.0).unwrap();
        let r = repair(&[2.0, 0.5, 0.5, -1.0], b);
        assert!(r.windows(2).all(|w| w[0] < w[1]));
        assert!(r.iter().all(|&v| (0.1..=1.0).contains(&v)));
    }
}
