//! Derivative scans and gap-count scaling studies on neutral-atom generators.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::erroranalysis::linspace;
use crate::error::{Error, Result};
use crate::quantum::{
    CostConfig, ExpectationProblem, GeneratorConfig, InitialStateConfig, LatticeSpec, Layout, NeutralAtomConfig, ShotModel,
};
use crate::shiftrules::{RuleKind, ShiftRule, ShiftRuleSpec, ShiftSchedule};
use crate::spectral::GapSet;

/// Points with `|f'_exact|` below this are left out of the relative error.
pub const REL_ERROR_GUARD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeError {
    /// Mean of `|est - exact| / |exact|` over the used points.
    pub r: f64,
    pub used: usize,
    pub excluded: usize,
}

pub fn relative_error(estimates: &[f64], exact: &[f64]) -> RelativeError {
    let (mut sum, mut used, mut excluded) = (0.0, 0usize, 0usize);
    for (e, x) in estimates.iter().zip(exact) {
        if x.abs() < REL_ERROR_GUARD {
            excluded += 1;
        } else {
            sum += (e - x).abs() / x.abs();
            used += 1;
        }
    }
    RelativeError { r: if used > 0 { sum / used as f64 } else { f64::NAN }, used, excluded }
}

/// One differentiation method in a scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MethodSpec {
    /// Two-term rule with a single assumed gap (default 2, the gap of `σx`).
    Psr {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gap: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shift: Option<f64>,
    },
    Gpsr {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        schedule: Option<ShiftSchedule>,
    },
    Agpsr {
        #[serde(rename = "K")]
        k: usize,
        step_a: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        schedule: Option<ShiftSchedule>,
    },
}

impl MethodSpec {
    pub fn label(&self) -> String {
        match self {
            MethodSpec::Psr { .. } => "psr".into(),
            MethodSpec::Gpsr { .. } => "gpsr".into(),
            MethodSpec::Agpsr { k, .. } => format!("agpsr_k{k}"),
        }
    }

    pub fn spec(&self, gaps: &GapSet, shots: ShotModel) -> Result<ShiftRuleSpec> {
        match self {
            MethodSpec::Psr { gap, shift } => {
                let gap = gap.unwrap_or(2.0);
                let schedule = match shift {
                    Some(s) => ShiftSchedule::Explicit { shifts: vec![*s] },
                    None => ShiftSchedule::default_for(RuleKind::Psr),
                };
                ShiftRuleSpec::with_schedule(RuleKind::Psr, vec![gap], &schedule, shots)
            }
            MethodSpec::Gpsr { schedule } => {
                if gaps.is_empty() {
                    return Err(Error::invalid("generator has no spectral gaps"));
                }
                let schedule = schedule.clone().unwrap_or_else(|| ShiftSchedule::default_for(RuleKind::Gpsr));
                ShiftRuleSpec::with_schedule(RuleKind::Gpsr, gaps.gaps.clone(), &schedule, shots)
            }
            MethodSpec::Agpsr { k, step_a, schedule } => {
                let gammas = crate::spectral::pseudo_gaps(&crate::spectral::PseudoGapConfig::uniform(*k, *step_a))?;
                let schedule = schedule.clone().unwrap_or_else(|| ShiftSchedule::default_for(RuleKind::Agpsr));
                ShiftRuleSpec::with_schedule(RuleKind::Agpsr, gammas, &schedule, shots)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub initial_state: InitialStateConfig,
    #[serde(default)]
    pub cost: CostConfig,
    pub methods: Vec<MethodSpec>,
    #[serde(default)]
    pub x_min: f64,
    #[serde(default = "default_x_max")]
    pub x_max: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<u64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_x_max() -> f64 {
    PI
}

fn default_points() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodColumn {
    pub label: String,
    pub spec: ShiftRuleSpec,
    pub condition_estimate: f64,
    pub calls_per_point: usize,
    pub values: Vec<f64>,
    pub relative_error: RelativeError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub n_qubits: usize,
    pub total_gaps: usize,
    pub xs: Vec<f64>,
    pub exact: Vec<f64>,
    pub methods: Vec<MethodColumn>,
}

impl ScanResult {
    pub fn method(&self, label: &str) -> Option<&MethodColumn> {
        self.methods.iter().find(|m| m.label == label)
    }

    /// `x, exact, <method>...`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["x".to_string(), "exact".to_string()];
        header.extend(self.methods.iter().map(|m| m.label.clone()));
        out.write_record(&header)?;
        for (i, x) in self.xs.iter().enumerate() {
            let mut row = vec![format!("{x:.17e}"), format!("{:.17e}", self.exact[i])];
            row.extend(self.methods.iter().map(|m| format!("{:.17e}", m.values[i])));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn build_problem(generator: &GeneratorConfig, state: &InitialStateConfig, cost: &CostConfig) -> Result<ExpectationProblem> {
    let g = generator.build()?;
    let n = g.n_qubits().ok_or_else(|| Error::DimensionMismatch(format!("generator dimension {} is not a power of two", g.dim())))?;
    ExpectationProblem::new(g, cost.build(n)?, state.build(n)?)
}

pub fn derivative_scan(cfg: &ScanConfig) -> Result<ScanResult> {
    if cfg.points == 0 {
        return Err(Error::invalid("scan needs at least one point"));
    }
    if cfg.methods.is_empty() {
        return Err(Error::invalid("scan needs at least one method"));
    }
    let problem = build_problem(&cfg.generator, &cfg.initial_state, &cfg.cost)?;
    let gaps = GapSet::of(problem.generator());
    let xs = linspace(cfg.x_min, cfg.x_max, cfg.points);
    let shots = match cfg.shots {
        Some(n) => ShotModel::finite(n, cfg.seed)?,
        None => ShotModel::exact(),
    };
    let exact: Vec<f64> = xs.iter().map(|&x| problem.derivative(x)).collect();
    let mut methods = Vec::with_capacity(cfg.methods.len());
    let mut labels: Vec<String> = Vec::new();
    for m in &cfg.methods {
        let mut label = m.label();
        if labels.contains(&label) {
            label = format!("{label}_{}", labels.len());
        }
        labels.push(label.clone());
        let rule = m.spec(&gaps, shots)?.prepare()?;
        let values = scan_rule(&problem, &rule, &xs)?;
        methods.push(MethodColumn {
            label,
            spec: rule.spec().clone(),
            condition_estimate: rule.condition_estimate(),
            calls_per_point: rule.spec().expectation_calls(),
            relative_error: relative_error(&values, &exact),
            values,
        });
    }
    Ok(ScanResult { n_qubits: problem.initial_state().n_qubits(), total_gaps: gaps.len(), xs, exact, methods })
}

/// Estimates at every `x`; with finite shots each point gets its own seed.
pub fn scan_rule(problem: &ExpectationProblem, rule: &ShiftRule, xs: &[f64]) -> Result<Vec<f64>> {
    let base = rule.spec().shot_model;
    xs.par_iter()
        .enumerate()
        .map(|(i, &x)| {
            let shots = base.with_seed(crate::shiftrules::splitmix64(base.seed.wrapping_add(i as u64)));
            rule.estimate_with_shots(problem, x, &shots).map(|r| r.estimate)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub k_grid: Vec<usize>,
    /// Candidate pseudo-gap steps; the best one is kept for each (N, K).
    pub step_grid: Vec<f64>,
    pub target_r: f64,
    pub lattice: LatticeSpec,
    /// Candidate shift schedules, searched together with the step grid.
    pub schedules: Vec<ShiftSchedule>,
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            n_min: 3,
            n_max: 6,
            k_grid: (1..=16).collect(),
            step_grid: vec![0.5, 1.0, 2.0, 3.0, 4.0, 6.0],
            target_r: 0.002,
            lattice: LatticeSpec::with_regime(Layout::Chain, crate::quantum::InteractionRegime::Balanced),
            schedules: vec![
                ShiftSchedule::Interval { lo: 0.25, hi: 0.5 },
                ShiftSchedule::Interval { lo: 0.5, hi: 1.0 },
                ShiftSchedule::Interval { lo: 1.0, hi: 2.0 },
            ],
            x_min: 0.0,
            x_max: PI,
            points: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingEntry {
    #[serde(rename = "K")]
    pub k: usize,
    /// Best relative error over the step grid; `None` if every step gave a singular rule.
    pub r: Option<f64>,
    pub best_step: Option<f64>,
    /// Index into `ScalingConfig::schedules`.
    pub best_schedule: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n_qubits: usize,
    pub total_gaps: usize,
    pub min_k: Option<usize>,
    pub entries: Vec<ScalingEntry>,
}

pub fn scaling_problem(n: usize, lattice: &LatticeSpec) -> Result<ExpectationProblem> {
    let gen = GeneratorConfig::NeutralAtom(NeutralAtomConfig { n_qubits: n, omega: 1.0, j: None, lattice: Some(lattice.clone()) });
    build_problem(&gen, &InitialStateConfig::Zero, &CostConfig::SumZ)
}

pub fn scaling_study(cfg: &ScalingConfig) -> Result<Vec<ScalingRow>> {
    if cfg.n_min < 1 || cfg.n_max < cfg.n_min || cfg.n_max > 8 {
        return Err(Error::invalid(format!("qubit range {}..={} outside 1..=8", cfg.n_min, cfg.n_max)));
    }
    if cfg.schedules.is_empty() || cfg.step_grid.is_empty() {
        return Err(Error::invalid("scaling study needs at least one schedule and one step"));
    }
    let xs = linspace(cfg.x_min, cfg.x_max, cfg.points);
    let no_gaps = GapSet::from_gaps(vec![])?;
    (cfg.n_min..=cfg.n_max)
        .map(|n| {
            let problem = scaling_problem(n, &cfg.lattice)?;
            let exact: Vec<f64> = xs.iter().map(|&x| problem.derivative(x)).collect();
            let entries: Vec<ScalingEntry> = cfg
                .k_grid
                .par_iter()
                .map(|&k| {
                    let mut best: Option<(f64, f64, usize)> = None;
                    for (si, schedule) in cfg.schedules.iter().enumerate() {
                        for &a in &cfg.step_grid {
                            let method = MethodSpec::Agpsr { k, step_a: a, schedule: Some(schedule.clone()) };
                            let Ok(rule) = method.spec(&no_gaps, ShotModel::exact()).and_then(|s| s.prepare()) else {
                                continue;
                            };
                            let values = scan_rule(&problem, &rule, &xs)?;
                            let r = relative_error(&values, &exact).r;
                            if r.is_finite() && best.is_none_or(|(b, _, _)| r < b) {
                                best = Some((r, a, si));
                            }
                        }
                    }
                    Ok(ScalingEntry { k, r: best.map(|b| b.0), best_step: best.map(|b| b.1), best_schedule: best.map(|b| b.2) })
                })
                .collect::<Result<_>>()?;
            let min_k = entries.iter().filter(|e| e.r.is_some_and(|r| r <= cfg.target_r)).map(|e| e.k).min();
            Ok(ScalingRow { n_qubits: n, total_gaps: GapSet::of(problem.generator()).len(), min_k, entries })
        })
        .collect()
}

/// `n_qubits, total_gaps, K, r, step, schedule`.
pub fn write_scaling_csv<W: Write>(rows: &[ScalingRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["n_qubits", "total_gaps", "K", "r", "step", "schedule"])?;
    for row in rows {
        for e in &row.entries {
            out.write_record([
                row.n_qubits.to_string(),
                row.total_gaps.to_string(),
                e.k.to_string(),
                e.r.map_or(String::new(), |r| format!("{r:.17e}")),
                e.best_step.map_or(String::new(), |a| a.to_string()),
                e.best_schedule.map_or(String::new(), |i| i.to_string()),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::MatrixDump;

    #[test]
    fn relative_error_guard() {
        let r = relative_error(&[1.1, 0.5, 2.0], &[1.0, 0.0, 2.0]);
        assert_eq!(r.used, 2);
        assert_eq!(r.excluded, 1);
        assert!((r.r - 0.05).abs() < 1e-12);
    }

    #[test]
    fn single_qubit_scan_exact_column() {
        let cfg = ScanConfig {
            generator: GeneratorConfig::Matrix(MatrixDump { re: vec![vec![0.0, 1.0], vec![1.0, 0.0]], im: None }),
            initial_state: InitialStateConfig::Zero,
            cost: CostConfig::SumZ,
            methods: vec![MethodSpec::Psr { gap: None, shift: None }, MethodSpec::Gpsr { schedule: None }],
            x_min: -PI,
            x_max: PI,
            points: 21,
            shots: None,
            seed: 0,
        };
        let res = derivative_scan(&cfg).unwrap();
        for (x, e) in res.xs.iter().zip(&res.exact) {
            assert!((e + x.sin()).abs() < 1e-10);
        }
        for m in &res.methods {
            for (v, e) in m.values.iter().zip(&res.exact) {
                assert!((v - e).abs() < 1e-12);
            }
        }
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("x,exact,psr,gpsr\n"));
    }

    #[test]
    fn small_scaling_study() {
        let cfg = ScalingConfig { n_min: 2, n_max: 3, k_grid: vec![1, 2, 4], points: 20, ..ScalingConfig::default() };
        let rows = scaling_study(&cfg).unwrap();
        assert_eq!(rows[1].total_gaps, 28);
        let r: Vec<f64> = rows[1].entries.iter().map(|e| e.r.unwrap()).collect();
        assert!(r[0] > r[1] && r[1] > r[2], "{r:?}");
    }
}
