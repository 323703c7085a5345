//! VQE on `Σ Z_i` with shift-rule gradients and Adam.

mod ansatz;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{sum_z, CostOperator, ShotModel};
use crate::shiftrules::{splitmix64, ExpectationFn, RuleKind, ShiftRule, ShiftRuleSpec, ShiftSchedule};

pub use ansatz::{build_ansatz, default_analog_lattice, Ansatz, AnsatzSpec, Gate, ParameterGenerator, MAX_QUBITS, MIN_QUBITS};

/// `Σ_i Z_i`.
pub fn build_cost_hamiltonian(n_qubits: usize) -> Result<CostOperator> {
    if n_qubits == 0 {
        return Err(Error::invalid("need at least one qubit"));
    }
    sum_z(n_qubits)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DiffMethod {
    Gpsr {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        schedule: Option<ShiftSchedule>,
    },
    /// Pseudo-gaps `a, 2a, ..., Ka`; parameters with at most K true gaps use exact GPSR.
    Agpsr {
        #[serde(rename = "K")]
        k: usize,
        step_a: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        schedule: Option<ShiftSchedule>,
    },
}

impl DiffMethod {
    pub fn gpsr() -> Self {
        DiffMethod::Gpsr { schedule: None }
    }

    pub fn agpsr(k: usize, step_a: f64) -> Self {
        DiffMethod::Agpsr { k, step_a, schedule: None }
    }

    pub fn label(&self) -> String {
        match self {
            DiffMethod::Gpsr { .. } => "gpsr".into(),
            DiffMethod::Agpsr { k, step_a, .. } => format!("agpsr_k{k}_a{step_a}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VqeConfig {
    pub n_qubits: usize,
    pub ansatz: AnsatzSpec,
    pub diff_method: DiffMethod,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Shots per expectation value; `None` means exact expectations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<u64>,
}

fn default_lr() -> f64 {
    0.01
}

fn default_iterations() -> usize {
    100
}

fn default_runs() -> usize {
    10
}

impl VqeConfig {
    pub fn new(n_qubits: usize, ansatz: AnsatzSpec, diff_method: DiffMethod) -> Self {
        Self {
            n_qubits,
            ansatz,
            diff_method,
            learning_rate: default_lr(),
            iterations: default_iterations(),
            runs: default_runs(),
            seed: 0,
            shots: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.runs == 0 {
            return Err(Error::invalid("need at least one run"));
        }
        if let Some(0) = self.shots {
            return Err(Error::invalid("shots must be at least 1"));
        }
        if let DiffMethod::Agpsr { k, step_a, .. } = &self.diff_method {
            if *k == 0 || !(*step_a > 0.0) {
                return Err(Error::invalid("aGPSR needs K >= 1 and a positive step"));
            }
        }
        Ok(())
    }

    fn shot_model(&self, seed: u64) -> ShotModel {
        match self.shots {
            Some(n) => ShotModel { shots: crate::quantum::Shots::Finite(n), seed },
            None => ShotModel::exact(),
        }
    }
}

/// Shift rule used for every parameter that shares a generator family.
fn rule_spec_for(gaps: &[f64], method: &DiffMethod) -> Result<ShiftRuleSpec> {
    match method {
        DiffMethod::Agpsr { k, step_a, schedule } if gaps.len() > *k => {
            let gammas: Vec<f64> = (1..=*k).map(|i| i as f64 * step_a).collect();
            let schedule = schedule.clone().unwrap_or_else(|| ShiftSchedule::default_for(RuleKind::Agpsr));
            ShiftRuleSpec::with_schedule(RuleKind::Agpsr, gammas, &schedule, ShotModel::exact())
        }
        DiffMethod::Gpsr { schedule: Some(schedule) } => {
            ShiftRuleSpec::with_schedule(RuleKind::Gpsr, gaps.to_vec(), schedule, ShotModel::exact())
        }
        _ => ShiftRuleSpec::with_schedule(RuleKind::Gpsr, gaps.to_vec(), &ShiftSchedule::default_for(RuleKind::Gpsr), ShotModel::exact()),
    }
}

fn equations_for(gaps: usize, method: &DiffMethod) -> usize {
    match method {
        DiffMethod::Agpsr { k, .. } if gaps > *k => *k,
        _ => gaps,
    }
}

/// Expectation calls for one full gradient, `Σ_params 2 K_param`.
pub fn calls_per_gradient(ansatz: &Ansatz, method: &DiffMethod) -> usize {
    (0..ansatz.parameter_count())
        .map(|p| 2 * equations_for(ansatz.parameter_generator(p).gaps.len(), method))
        .sum()
}

/// Ansatz, cost and factored shift rules, ready for repeated gradients.
#[derive(Debug, Clone)]
pub struct VqeProblem {
    config: VqeConfig,
    ansatz: Ansatz,
    rules: Vec<ShiftRule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradient {
    pub values: Vec<f64>,
    pub expectation_calls: usize,
}

impl VqeProblem {
    pub fn new(config: VqeConfig) -> Result<Self> {
        config.validate()?;
        let ansatz = build_ansatz(&config.ansatz, config.n_qubits)?;
        let rules = ansatz
            .generators()
            .iter()
            .map(|g| rule_spec_for(&g.gaps.gaps, &config.diff_method)?.prepare())
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config, ansatz, rules })
    }

    pub fn config(&self) -> &VqeConfig {
        &self.config
    }

    pub fn ansatz(&self) -> &Ansatz {
        &self.ansatz
    }

    pub fn rule_for(&self, p: usize) -> &ShiftRule {
        &self.rules[self.ansatz.generator_index(p)]
    }

    pub fn calls_per_gradient(&self) -> usize {
        (0..self.ansatz.parameter_count()).map(|p| self.rule_for(p).spec().expectation_calls()).sum()
    }

    pub fn energy(&self, params: &[f64]) -> Result<f64> {
        self.ansatz.energy(params, &ShotModel::exact())
    }

    /// Per-parameter shift-rule derivatives; `seed` only matters with finite shots.
    pub fn gradient(&self, params: &[f64], seed: u64) -> Result<Gradient> {
        if params.len() != self.ansatz.parameter_count() {
            return Err(Error::DimensionMismatch(format!(
                "ansatz has {} parameters, got {}",
                self.ansatz.parameter_count(),
                params.len()
            )));
        }
        let results = (0..params.len())
            .into_par_iter()
            .map(|p| {
                let f = ParamSlice { ansatz: &self.ansatz, params, index: p };
                let shots = self.config.shot_model(splitmix64(seed ^ (p as u64).wrapping_mul(0x9e37_79b9)));
                self.rule_for(p).estimate_with_shots(&f, params[p], &shots)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Gradient {
            expectation_calls: results.iter().map(|r| r.expectation_calls).sum(),
            values: results.into_iter().map(|r| r.estimate).collect(),
        })
    }
}

/// Energy as a function of one parameter with the others held fixed.
struct ParamSlice<'a> {
    ansatz: &'a Ansatz,
    params: &'a [f64],
    index: usize,
}

impl ExpectationFn for ParamSlice<'_> {
    fn eval(&self, x: f64, shots: &ShotModel) -> f64 {
        let mut th = self.params.to_vec();
        th[self.index] = x;
        self.ansatz.energy(&th, shots).expect("parameter count checked")
    }
}

pub fn gradient(config: &VqeConfig, params: &[f64]) -> Result<Gradient> {
    VqeProblem::new(config.clone())?.gradient(params, config.seed)
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n] }
    }
}

/// Bias-corrected Adam update for step `t ≥ 1`; returns the parameter delta and the new moments.
pub fn adam_step(state: &AdamState, grad: &[f64], lr: f64, t: usize) -> (Vec<f64>, AdamState) {
    let t = t.max(1) as i32;
    let mut next = state.clone();
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    let delta = grad
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            next.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
            next.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let mh = next.m[i] / c1;
            let vh = next.v[i] / c2;
            -lr * mh / (vh.sqrt() + ADAM_EPS)
        })
        .collect();
    (delta, next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub run: usize,
    pub run_seed: u64,
    /// Energy before training followed by the energy after every iteration.
    pub energies: Vec<f64>,
    /// Expectation calls spent on gradients up to each entry of `energies`.
    pub cumulative_calls: Vec<u64>,
    pub final_energy: f64,
    pub final_params: Vec<f64>,
}

impl TrainTrace {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["iteration", "energy", "cumulative_calls"])?;
        for (i, (e, c)) in self.energies.iter().zip(&self.cumulative_calls).enumerate() {
            out.write_record([i.to_string(), format!("{e:.17e}"), c.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn run_seed(base: u64, run: usize) -> u64 {
    splitmix64(base.wrapping_add(run as u64))
}

/// Uniform in `[-π, π]`.
pub fn initial_params(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-std::f64::consts::PI..=std::f64::consts::PI)).collect()
}

impl VqeProblem {
    pub fn train(&self, run: usize) -> Result<TrainTrace> {
        let seed = run_seed(self.config.seed, run);
        let mut params = initial_params(self.ansatz.parameter_count(), seed);
        let mut adam = AdamState::new(params.len());
        let mut energies = vec![self.energy(&params)?];
        let mut calls = vec![0u64];
        let mut total = 0u64;
        for t in 1..=self.config.iterations {
            let grad = self.gradient(&params, splitmix64(seed ^ t as u64))?;
            total += grad.expectation_calls as u64;
            let (delta, next) = adam_step(&adam, &grad.values, self.config.learning_rate, t);
            adam = next;
            params.iter_mut().zip(&delta).for_each(|(p, d)| *p += d);
            energies.push(self.energy(&params)?);
            calls.push(total);
        }
        Ok(TrainTrace {
            run,
            run_seed: seed,
            final_energy: *energies.last().expect("initial energy present"),
            energies,
            cumulative_calls: calls,
            final_params: params,
        })
    }
}

/// Independent seeded runs, executed in parallel.
pub fn run_vqe(config: &VqeConfig) -> Result<Vec<TrainTrace>> {
    let problem = VqeProblem::new(config.clone())?;
    (0..config.runs).into_par_iter().map(|r| problem.train(r)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqeSummary {
    pub method: String,
    pub runs: usize,
    pub iterations: usize,
    pub calls_per_gradient: usize,
    pub total_calls_per_run: u64,
    pub mean_final_energy: f64,
    pub min_final_energy: f64,
    pub savings_vs_gpsr: f64,
}

/// GPSR calls per gradient divided by this method's, for the same ansatz.
pub fn savings_vs_gpsr(problem: &VqeProblem) -> f64 {
    let gpsr = calls_per_gradient(problem.ansatz(), &DiffMethod::gpsr());
    gpsr as f64 / problem.calls_per_gradient() as f64
}

pub fn summarize(problem: &VqeProblem, traces: &[TrainTrace]) -> VqeSummary {
    let finals: Vec<f64> = traces.iter().map(|t| t.final_energy).collect();
    VqeSummary {
        method: problem.config().diff_method.label(),
        runs: traces.len(),
        iterations: problem.config().iterations,
        calls_per_gradient: problem.calls_per_gradient(),
        total_calls_per_run: traces.first().and_then(|t| t.cumulative_calls.last().copied()).unwrap_or(0),
        mean_final_energy: finals.iter().sum::<f64>() / finals.len().max(1) as f64,
        min_final_energy: finals.iter().copied().fold(f64::INFINITY, f64::min),
        savings_vs_gpsr: savings_vs_gpsr(problem),
    }
}
