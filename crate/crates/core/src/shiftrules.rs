//! Parameter-shift differentiation: single-gap PSR, full GPSR and approximate GPSR.
//!
//! All three share one engine. For shifts `δ_i` and gaps `g_k` it evaluates
//! `F_i = f(x + δ_i) - f(x - δ_i)`, solves `M R = F` with `M_ik = 4 sin(δ_i g_k / 2)`
//! and returns `Σ_k g_k R_k`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{LuFactorization, NumericsConfig, RealMatrix};
use crate::quantum::{ExpectationProblem, ShotModel};
use crate::spectral::{max_gap_count, validate_ascending_positive};

/// A scalar function of the circuit parameter, evaluated under a shot model.
pub trait ExpectationFn: Sync {
    fn eval(&self, x: f64, shots: &ShotModel) -> f64;
}

impl<F> ExpectationFn for F
where
    F: Fn(f64, &ShotModel) -> f64 + Sync,
{
    fn eval(&self, x: f64, shots: &ShotModel) -> f64 {
        self(x, shots)
    }
}

impl ExpectationFn for ExpectationProblem {
    fn eval(&self, x: f64, shots: &ShotModel) -> f64 {
        self.value(x, shots)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    Psr,
    Gpsr,
    Agpsr,
}

/// How to pick shifts when the caller does not list them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ShiftSchedule {
    /// K points equidistant in `[lo, hi] / g_max`; a single shift sits at `hi / g_max`.
    ScaledToMaxGap { lo: f64, hi: f64 },
    /// K points equidistant in the absolute interval `[lo, hi]`; a single shift sits at `hi`.
    Interval { lo: f64, hi: f64 },
    /// Golden-ratio sequence `T · frac(i φ)` with `T = c π / min spacing`. Without `c`,
    /// a few scales are tried and the best-conditioned one is kept.
    LowDiscrepancy {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<f64>,
    },
    /// `δ_j = 2πj / ((K+1) s)` with `s` the smallest gap spacing. For gaps `a, 2a, ..., Ka`
    /// the shift matrix is a discrete sine transform and perfectly conditioned.
    SineGrid,
    Explicit { shifts: Vec<f64> },
}

impl ShiftSchedule {
    pub fn default_for(kind: RuleKind) -> Self {
        match kind {
            RuleKind::Gpsr => ShiftSchedule::LowDiscrepancy { c: None },
            RuleKind::Psr | RuleKind::Agpsr => ShiftSchedule::ScaledToMaxGap { lo: PI / 4.0, hi: PI / 2.0 },
        }
    }

    pub fn shifts(&self, gaps: &[f64]) -> Result<Vec<f64>> {
        let k = gaps.len();
        if k == 0 {
            return Err(Error::invalid("shift schedule needs at least one gap"));
        }
        let shifts = match self {
            ShiftSchedule::ScaledToMaxGap { lo, hi } => {
                let gmax = gaps.iter().copied().fold(0.0, f64::max);
                if !(gmax > 0.0) {
                    return Err(Error::invalid("gaps must be positive"));
                }
                linspace_or_top(*lo / gmax, *hi / gmax, k)
            }
            ShiftSchedule::Interval { lo, hi } => linspace_or_top(*lo, *hi, k),
            ShiftSchedule::LowDiscrepancy { c: Some(c) } => golden_shifts(gaps, *c),
            ShiftSchedule::LowDiscrepancy { c: None } => {
                let mut best: Option<(f64, Vec<f64>)> = None;
                for c in GOLDEN_SCALES {
                    let shifts = golden_shifts(gaps, c);
                    let cond = match LuFactorization::new(&build_shift_matrix(gaps, &shifts), &NumericsConfig::default()) {
                        Ok(lu) => lu.condition_estimate(),
                        Err(_) => continue,
                    };
                    if best.as_ref().is_none_or(|(b, _)| cond < *b) {
                        best = Some((cond, shifts));
                    }
                }
                best.map(|(_, s)| s).unwrap_or_else(|| golden_shifts(gaps, GOLDEN_SCALES[0]))
            }
            ShiftSchedule::SineGrid => {
                let s = min_spacing(gaps);
                (1..=k).map(|j| 2.0 * PI * j as f64 / ((k + 1) as f64 * s)).collect()
            }
            ShiftSchedule::Explicit { shifts } => {
                if shifts.len() != k {
                    return Err(Error::DimensionMismatch(format!("{} shifts for {k} gaps", shifts.len())));
                }
                shifts.clone()
            }
        };
        validate_ascending_positive(&shifts, "shift")?;
        Ok(shifts)
    }
}

const GOLDEN_SCALES: [f64; 5] = [0.5, 0.35, 0.7, 0.25, 1.0];

fn linspace_or_top(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![hi];
    }
    (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
}

fn min_spacing(gaps: &[f64]) -> f64 {
    gaps.windows(2).map(|w| w[1] - w[0]).fold(gaps[0], f64::min)
}

fn golden_shifts(gaps: &[f64], c: f64) -> Vec<f64> {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let top = c * PI / min_spacing(gaps);
    let mut shifts: Vec<f64> = (1..=gaps.len()).map(|i| top * (i as f64 * phi).fract()).collect();
    shifts.sort_by(f64::total_cmp);
    shifts
}

/// Upper bound on `|M_ij|`, used as the absolute scale for pivots.
pub(crate) const SHIFT_MATRIX_SCALE: f64 = 4.0;

/// `M_ij = 4 sin(δ_i g_j / 2)`.
pub fn build_shift_matrix(gaps: &[f64], shifts: &[f64]) -> RealMatrix {
    RealMatrix::from_fn(shifts.len(), gaps.len(), |i, j| 4.0 * (0.5 * shifts[i] * gaps[j]).sin())
}

/// Everything needed to evaluate one derivative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftRuleSpec {
    pub kind: RuleKind,
    /// True gaps for PSR/GPSR, pseudo-gaps for aGPSR.
    pub gaps: Vec<f64>,
    pub shifts: Vec<f64>,
    pub shot_model: ShotModel,
}

impl ShiftRuleSpec {
    pub fn new(kind: RuleKind, gaps: Vec<f64>, shifts: Vec<f64>, shot_model: ShotModel) -> Result<Self> {
        let spec = Self { kind, gaps, shifts, shot_model };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_schedule(kind: RuleKind, gaps: Vec<f64>, schedule: &ShiftSchedule, shot_model: ShotModel) -> Result<Self> {
        validate_ascending_positive(&gaps, "gap")?;
        let shifts = schedule.shifts(&gaps)?;
        Self::new(kind, gaps, shifts, shot_model)
    }

    pub fn psr(gap: f64, shift: f64) -> Result<Self> {
        Self::new(RuleKind::Psr, vec![gap], vec![shift], ShotModel::exact())
    }

    pub fn k(&self) -> usize {
        self.gaps.len()
    }

    pub fn expectation_calls(&self) -> usize {
        2 * self.k()
    }

    pub fn validate(&self) -> Result<()> {
        if self.gaps.is_empty() {
            return Err(Error::invalid("shift rule needs at least one gap"));
        }
        if self.gaps.len() != self.shifts.len() {
            return Err(Error::DimensionMismatch(format!("{} gaps vs {} shifts", self.gaps.len(), self.shifts.len())));
        }
        if self.kind == RuleKind::Psr && self.k() != 1 {
            return Err(Error::invalid("PSR uses exactly one gap"));
        }
        validate_ascending_positive(&self.gaps, "gap")?;
        validate_ascending_positive(&self.shifts, "shift")?;
        Ok(())
    }

    pub fn matrix(&self) -> RealMatrix {
        build_shift_matrix(&self.gaps, &self.shifts)
    }

    /// Factor `M` once for repeated use.
    pub fn prepare(&self) -> Result<ShiftRule> {
        ShiftRule::new(self.clone())
    }
}

/// A validated spec with its factored shift matrix.
#[derive(Debug, Clone)]
pub struct ShiftRule {
    spec: ShiftRuleSpec,
    lu: LuFactorization,
    condition_estimate: f64,
}

impl ShiftRule {
    pub fn new(spec: ShiftRuleSpec) -> Result<Self> {
        Self::with_config(spec, &NumericsConfig::default())
    }

    pub fn with_config(spec: ShiftRuleSpec, cfg: &NumericsConfig) -> Result<Self> {
        spec.validate()?;
        let lu = LuFactorization::new(&spec.matrix(), cfg).map_err(|e| match e {
            Error::SingularSystem { condition_estimate } => Error::SingularShiftRule { condition_estimate },
            other => other,
        })?;
        let condition_estimate = lu.condition_estimate();
        if !(condition_estimate < cfg.max_condition) || lu.min_abs_pivot() <= SHIFT_MATRIX_SCALE * cfg.pivot_tol {
            return Err(Error::SingularShiftRule { condition_estimate });
        }
        Ok(Self { spec, lu, condition_estimate })
    }

    pub fn spec(&self) -> &ShiftRuleSpec {
        &self.spec
    }

    pub fn condition_estimate(&self) -> f64 {
        self.condition_estimate
    }

    pub fn inverse(&self) -> RealMatrix {
        self.lu.inverse()
    }

    /// Derivative estimate at `x`; finite-shot seeds derive from the spec seed, shift index and sign.
    pub fn estimate<F: ExpectationFn + ?Sized>(&self, f: &F, x: f64) -> Result<DerivativeResult> {
        self.estimate_with_shots(f, x, &self.spec.shot_model)
    }

    /// As [`ShiftRule::estimate`] but with a different shot model, e.g. a fresh seed.
    pub fn estimate_with_shots<F: ExpectationFn + ?Sized>(&self, f: &F, x: f64, shots: &ShotModel) -> Result<DerivativeResult> {
        let evals: Vec<(f64, f64)> = self
            .spec
            .shifts
            .par_iter()
            .enumerate()
            .map(|(i, &d)| {
                let plus = shots.with_seed(derive_seed(shots.seed, i, true));
                let minus = shots.with_seed(derive_seed(shots.seed, i, false));
                (f.eval(x + d, &plus), f.eval(x - d, &minus))
            })
            .collect();
        let (f_plus, f_minus): (Vec<f64>, Vec<f64>) = evals.into_iter().unzip();
        self.combine(f_plus, f_minus)
    }

    /// Solve for `R` from precomputed shifted values.
    pub fn combine(&self, f_plus: Vec<f64>, f_minus: Vec<f64>) -> Result<DerivativeResult> {
        let k = self.spec.k();
        if f_plus.len() != k || f_minus.len() != k {
            return Err(Error::DimensionMismatch(format!("expected {k} shifted evaluations per sign")));
        }
        let rhs: Vec<f64> = f_plus.iter().zip(&f_minus).map(|(p, m)| p - m).collect();
        let r_values = self.lu.solve(&rhs)?;
        let estimate = self.spec.gaps.iter().zip(&r_values).map(|(g, r)| g * r).sum();
        Ok(DerivativeResult {
            kind: self.spec.kind,
            estimate,
            r_values,
            gaps: self.spec.gaps.clone(),
            shifts: self.spec.shifts.clone(),
            f_plus,
            f_minus,
            expectation_calls: 2 * k,
            predicted_variance: None,
            condition_estimate: self.condition_estimate,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeResult {
    pub kind: RuleKind,
    pub estimate: f64,
    /// `R_s` (GPSR) or `R'_k` (aGPSR).
    pub r_values: Vec<f64>,
    pub gaps: Vec<f64>,
    pub shifts: Vec<f64>,
    pub f_plus: Vec<f64>,
    pub f_minus: Vec<f64>,
    pub expectation_calls: usize,
    pub predicted_variance: Option<f64>,
    pub condition_estimate: f64,
}

pub fn estimate_derivative<F: ExpectationFn + ?Sized>(f: &F, x: f64, spec: &ShiftRuleSpec) -> Result<DerivativeResult> {
    spec.prepare()?.estimate(f, x)
}

/// Two-term rule `gap (f(x+δ) - f(x-δ)) / (4 sin(δ gap / 2))`.
pub fn psr_single_gap<F: ExpectationFn + ?Sized>(f: &F, x: f64, gap: f64, shift: f64) -> Result<DerivativeResult> {
    if !(gap > 0.0) {
        return Err(Error::invalid(format!("gap must be positive, got {gap}")));
    }
    if (0.5 * shift * gap).sin().abs() < 1e-12 {
        return Err(Error::invalid(format!("sin(δ·gap/2) vanishes for δ = {shift}, gap = {gap}")));
    }
    estimate_derivative(f, x, &ShiftRuleSpec::psr(gap, shift)?)
}

/// Expectation calls per derivative for full GPSR on a generic N-qubit generator.
pub fn count_full_gpsr_cost(n_qubits: u32) -> u64 {
    2 * max_gap_count(n_qubits)
}

/// SplitMix64 finalizer.
pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, index: usize, plus: bool) -> u64 {
    splitmix64(base ^ splitmix64(2 * index as u64 + u64::from(plus)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{pauli_x, pauli_z, random_hermitian, sum_z, HermitianOperator, QuantumState};
    use crate::spectral::GapSet;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};

    fn cosine(x: f64, _: &ShotModel) -> f64 {
        x.cos()
    }

    #[test]
    fn shift_matrix_examples() {
        assert!((build_shift_matrix(&[2.0], &[FRAC_PI_2])[(0, 0)] - 4.0).abs() < 1e-15);
        let m = build_shift_matrix(&[1.0, 2.0], &[FRAC_PI_2, PI]);
        let expect = [[2.0 * SQRT_2, 4.0], [4.0, 0.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((m[(i, j)] - expect[i][j]).abs() < 1e-14);
            }
        }
        assert!((build_shift_matrix(&[2.0], &[FRAC_PI_4])[(0, 0)] - 2.0 * SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn sine_grid_is_orthogonal_for_uniform_gaps() {
        for k in [1usize, 4, 20] {
            let gaps: Vec<f64> = (1..=k).map(|i| 3.0 * i as f64).collect();
            let shifts = ShiftSchedule::SineGrid.shifts(&gaps).unwrap();
            let m = build_shift_matrix(&gaps, &shifts);
            let mtm = m.transpose().matmul(&m);
            let scale = 8.0 * (k + 1) as f64;
            for i in 0..k {
                for j in 0..k {
                    let want = if i == j { scale } else { 0.0 };
                    assert!((mtm[(i, j)] - want).abs() < 1e-9, "K={k}");
                }
            }
        }
    }

    #[test]
    fn cosine_examples() {
        let spec = ShiftRuleSpec::new(RuleKind::Gpsr, vec![2.0], vec![FRAC_PI_4], ShotModel::exact()).unwrap();
        let r = estimate_derivative(&cosine, FRAC_PI_2, &spec).unwrap();
        assert!((r.estimate + 1.0).abs() < 1e-14);
        assert_eq!(r.expectation_calls, 2);
        assert!(psr_single_gap(&cosine, 0.0, 2.0, FRAC_PI_4).unwrap().estimate.abs() < 1e-15);
        assert!((psr_single_gap(&cosine, FRAC_PI_2, 2.0, FRAC_PI_4).unwrap().estimate + 1.0).abs() < 1e-14);
        assert!(psr_single_gap(&cosine, 0.0, 2.0, PI).is_err());
    }

    #[test]
    fn constant_function_has_zero_derivative() {
        let spec = ShiftRuleSpec::with_schedule(RuleKind::Agpsr, vec![1.0, 2.0, 3.0], &ShiftSchedule::default_for(RuleKind::Agpsr), ShotModel::exact()).unwrap();
        let r = estimate_derivative(&|_x: f64, _s: &ShotModel| 3.5, 0.7, &spec).unwrap();
        assert_eq!(r.estimate, 0.0);
    }

    #[test]
    fn estimate_is_gap_weighted_sum() {
        let g = random_hermitian(4, 3.0, 5).unwrap();
        let p = ExpectationProblem::new(g.clone(), sum_z(2).unwrap(), QuantumState::random(2, 6)).unwrap();
        let gaps = GapSet::of(&g).gaps;
        let spec = ShiftRuleSpec::with_schedule(RuleKind::Gpsr, gaps, &ShiftSchedule::default_for(RuleKind::Gpsr), ShotModel::exact()).unwrap();
        let r = estimate_derivative(&p, 0.3, &spec).unwrap();
        let sum: f64 = r.gaps.iter().zip(&r.r_values).map(|(g, r)| g * r).sum();
        assert_eq!(sum, r.estimate);
        assert!((r.estimate - p.derivative(0.3)).abs() < 1e-8);
        assert_eq!(r.expectation_calls, 2 * r.gaps.len());
    }

    #[test]
    fn linear_in_the_function() {
        let a = ExpectationProblem::new(random_hermitian(4, 2.0, 1).unwrap(), sum_z(2).unwrap(), QuantumState::zero(2)).unwrap();
        let b = ExpectationProblem::new(random_hermitian(4, 2.0, 2).unwrap(), sum_z(2).unwrap(), QuantumState::zero(2)).unwrap();
        let spec = ShiftRuleSpec::with_schedule(RuleKind::Agpsr, vec![0.5, 1.0, 1.5], &ShiftSchedule::default_for(RuleKind::Agpsr), ShotModel::exact()).unwrap();
        let combo = |x: f64, _: &ShotModel| 2.0 * a.exact(x) - 0.5 * b.exact(x);
        let lhs = estimate_derivative(&combo, 0.4, &spec).unwrap().estimate;
        let rhs = 2.0 * estimate_derivative(&a, 0.4, &spec).unwrap().estimate - 0.5 * estimate_derivative(&b, 0.4, &spec).unwrap().estimate;
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn finite_shots_are_deterministic() {
        let p = ExpectationProblem::new(HermitianOperator::new(pauli_x()).unwrap(), HermitianOperator::new(pauli_z()).unwrap(), QuantumState::zero(1)).unwrap();
        let spec = ShiftRuleSpec::new(RuleKind::Psr, vec![2.0], vec![FRAC_PI_2], ShotModel::finite(100, 9).unwrap()).unwrap();
        let a = estimate_derivative(&p, 0.3, &spec).unwrap();
        let b = estimate_derivative(&p, 0.3, &spec).unwrap();
        assert_eq!(a, b);
        assert_ne!(derive_seed(9, 0, true), derive_seed(9, 0, false));
    }

    #[test]
    fn invalid_specs() {
        assert!(ShiftRuleSpec::new(RuleKind::Gpsr, vec![1.0, 2.0], vec![0.1], ShotModel::exact()).is_err());
        assert!(ShiftRuleSpec::new(RuleKind::Gpsr, vec![1.0, 2.0], vec![0.2, 0.1], ShotModel::exact()).is_err());
        assert!(ShiftRuleSpec::new(RuleKind::Psr, vec![1.0, 2.0], vec![0.1, 0.2], ShotModel::exact()).is_err());
        let singular = ShiftRuleSpec::new(RuleKind::Gpsr, vec![1.0, 2.0], vec![PI, 2.0 * PI], ShotModel::exact()).unwrap();
        assert!(matches!(singular.prepare(), Err(Error::SingularShiftRule { .. })));
        let singular = ShiftRuleSpec::new(RuleKind::Gpsr, vec![2.0], vec![PI], ShotModel::exact()).unwrap();
        assert!(matches!(singular.prepare(), Err(Error::SingularShiftRule { .. })));
    }

    #[test]
    fn full_gpsr_costs() {
        assert_eq!(count_full_gpsr_cost(5), 992);
        assert_eq!(count_full_gpsr_cost(6), 4032);
        assert_eq!(count_full_gpsr_cost(1), 2);
    }

    #[test]
    fn default_schedules() {
        let s = ShiftSchedule::default_for(RuleKind::Agpsr).shifts(&[4.0, 8.0]).unwrap();
        assert!((s[0] - FRAC_PI_4 / 8.0).abs() < 1e-15 && (s[1] - FRAC_PI_2 / 8.0).abs() < 1e-15);
        let single = ShiftSchedule::default_for(RuleKind::Psr).shifts(&[2.0]).unwrap();
        assert!((single[0] - FRAC_PI_4).abs() < 1e-15);
        let golden = ShiftSchedule::LowDiscrepancy { c: Some(0.5) }.shifts(&[1.0, 2.0, 3.0]).unwrap();
        assert!(golden.windows(2).all(|w| w[0] < w[1]));
    }
}
