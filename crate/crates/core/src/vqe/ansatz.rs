use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{
    bit, neutral_atom_generator, rx_entries, sample_mean, ExpectationProblem, Generator, HermitianOperator, Layout,
    LatticeSpec, QuantumState, ShotModel, Shots,
};
use crate::spectral::GapSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AnsatzSpec {
    /// Layers of `RX` on every qubit followed by a nearest-neighbour chain of `CRX`.
    Digital {
        #[serde(default = "default_layers")]
        layers: usize,
    },
    /// One global parameter `x` of the neutral-atom evolution `exp(-i x G / 2)`.
    Analog {
        #[serde(default = "default_analog_lattice")]
        lattice: LatticeSpec,
    },
}

fn default_layers() -> usize {
    3
}

/// Chain with nearest-neighbour `J/Ω = 4`.
pub fn default_analog_lattice() -> LatticeSpec {
    LatticeSpec::with_regime(Layout::Chain, crate::quantum::InteractionRegime::Strong)
}

impl AnsatzSpec {
    pub fn digital() -> Self {
        AnsatzSpec::Digital { layers: default_layers() }
    }

    pub fn analog() -> Self {
        AnsatzSpec::Analog { lattice: default_analog_lattice() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "gate", rename_all = "snake_case")]
pub enum Gate {
    Rx { qubit: usize },
    Crx { control: usize, target: usize },
}

/// Generator family of one parameter together with its true gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterGenerator {
    pub label: String,
    pub gaps: GapSet,
}

#[derive(Debug, Clone)]
enum Body {
    Digital { gates: Vec<Gate> },
    Analog { problem: Box<ExpectationProblem> },
}

#[derive(Debug, Clone)]
pub struct Ansatz {
    spec: AnsatzSpec,
    n_qubits: usize,
    body: Body,
    generators: Vec<ParameterGenerator>,
    /// Index into `generators` for every parameter.
    param_generator: Vec<usize>,
}

pub const MIN_QUBITS: usize = 2;
pub const MAX_QUBITS: usize = 8;

/// `|1><1| ⊗ σx`.
fn crx_generator() -> Result<Generator> {
    let mut m = crate::numerics::ComplexMatrix::zeros(4, 4);
    m[(2, 3)] = Complex64::new(1.0, 0.0);
    m[(3, 2)] = Complex64::new(1.0, 0.0);
    HermitianOperator::new(m)
}

pub fn build_ansatz(spec: &AnsatzSpec, n_qubits: usize) -> Result<Ansatz> {
    if !(MIN_QUBITS..=MAX_QUBITS).contains(&n_qubits) {
        return Err(Error::Unsupported(format!("ansatz size {n_qubits}; supported range is {MIN_QUBITS}..={MAX_QUBITS}")));
    }
    let cost = super::build_cost_hamiltonian(n_qubits)?;
    match spec {
        AnsatzSpec::Digital { layers } => {
            if *layers == 0 {
                return Err(Error::invalid("digital ansatz needs at least one layer"));
            }
            let rx = HermitianOperator::new(crate::quantum::pauli_x())?;
            let generators = vec![
                ParameterGenerator { label: "rx".into(), gaps: GapSet::of(&rx) },
                ParameterGenerator { label: "crx".into(), gaps: GapSet::of(&crx_generator()?) },
            ];
            let mut gates = Vec::new();
            let mut param_generator = Vec::new();
            for _ in 0..*layers {
                for q in 0..n_qubits {
                    gates.push(Gate::Rx { qubit: q });
                    param_generator.push(0);
                }
                for q in 0..n_qubits - 1 {
                    gates.push(Gate::Crx { control: q, target: q + 1 });
                    param_generator.push(1);
                }
            }
            Ok(Ansatz { spec: spec.clone(), n_qubits, body: Body::Digital { gates }, generators, param_generator })
        }
        AnsatzSpec::Analog { lattice } => {
            let g = neutral_atom_generator(n_qubits, 1.0, &lattice.interactions(n_qubits, 1.0)?)?;
            let gaps = GapSet::of(&g);
            let problem = ExpectationProblem::new(g, cost, QuantumState::zero(n_qubits))?;
            Ok(Ansatz {
                spec: spec.clone(),
                n_qubits,
                body: Body::Analog { problem: Box::new(problem) },
                generators: vec![ParameterGenerator { label: "analog".into(), gaps }],
                param_generator: vec![0],
            })
        }
    }
}

impl Ansatz {
    pub fn spec(&self) -> &AnsatzSpec {
        &self.spec
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn parameter_count(&self) -> usize {
        self.param_generator.len()
    }

    pub fn generators(&self) -> &[ParameterGenerator] {
        &self.generators
    }

    pub fn parameter_generator(&self, p: usize) -> &ParameterGenerator {
        &self.generators[self.param_generator[p]]
    }

    pub(crate) fn generator_index(&self, p: usize) -> usize {
        self.param_generator[p]
    }

    pub fn gates(&self) -> Option<&[Gate]> {
        match &self.body {
            Body::Digital { gates } => Some(gates),
            Body::Analog { .. } => None,
        }
    }

    /// Output state for the given parameters.
    pub fn state(&self, params: &[f64]) -> Result<QuantumState> {
        self.check_len(params)?;
        match &self.body {
            Body::Digital { gates } => {
                let mut psi = QuantumState::zero(self.n_qubits);
                for (gate, &theta) in gates.iter().zip(params) {
                    apply_gate(psi.amplitudes_mut(), *gate, theta, self.n_qubits);
                }
                Ok(psi)
            }
            Body::Analog { problem } => crate::quantum::evolve(problem.generator(), params[0], problem.initial_state()),
        }
    }

    /// `<ψ(θ)| Σ Z_i |ψ(θ)>`, exact or sampled in the computational basis.
    pub fn energy(&self, params: &[f64], shots: &ShotModel) -> Result<f64> {
        self.check_len(params)?;
        if let Body::Analog { problem } = &self.body {
            return Ok(problem.value(params[0], shots));
        }
        let psi = self.state(params)?;
        let n = self.n_qubits;
        let outcomes: Vec<f64> = (0..psi.dim())
            .map(|b| (0..n).map(|q| if bit(b, q, n) == 0 { 1.0 } else { -1.0 }).sum())
            .collect();
        let probs: Vec<f64> = psi.amplitudes().iter().map(|a| a.norm_sqr()).collect();
        Ok(match shots.shots {
            Shots::Infinite => outcomes.iter().zip(&probs).map(|(o, p)| o * p).sum(),
            Shots::Finite(k) => sample_mean(&outcomes, &probs, k, shots.seed),
        })
    }

    /// Analytic gradient, for tests and diagnostics.
    pub fn exact_gradient(&self, params: &[f64]) -> Result<Vec<f64>> {
        self.check_len(params)?;
        match &self.body {
            Body::Analog { problem } => Ok(vec![problem.derivative(params[0])]),
            Body::Digital { .. } => {
                // Exact shift rules: RX has one gap, CRX is fixed by the four-term rule.
                (0..params.len())
                    .map(|p| {
                        let gaps = &self.parameter_generator(p).gaps.gaps;
                        let shifts: Vec<f64> = match gaps.len() {
                            1 => vec![std::f64::consts::FRAC_PI_2],
                            _ => vec![std::f64::consts::FRAC_PI_2, 3.0 * std::f64::consts::FRAC_PI_2],
                        };
                        let spec = crate::shiftrules::ShiftRuleSpec::new(
                            crate::shiftrules::RuleKind::Gpsr,
                            gaps.clone(),
                            shifts,
                            ShotModel::exact(),
                        )?;
                        let f = |x: f64, s: &ShotModel| {
                            let mut th = params.to_vec();
                            th[p] = x;
                            self.energy(&th, s).expect("length checked")
                        };
                        Ok(crate::shiftrules::estimate_derivative(&f, params[p], &spec)?.estimate)
                    })
                    .collect()
            }
        }
    }

    fn check_len(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::DimensionMismatch(format!(
                "ansatz has {} parameters, got {}",
                self.parameter_count(),
                params.len()
            )));
        }
        Ok(())
    }
}

fn apply_gate(amps: &mut [Complex64], gate: Gate, theta: f64, n: usize) {
    let (c, ms) = rx_entries(theta);
    let (tq, control) = match gate {
        Gate::Rx { qubit } => (qubit, None),
        Gate::Crx { control, target } => (target, Some(control)),
    };
    let tmask = 1usize << (n - 1 - tq);
    let cmask = control.map(|q| 1usize << (n - 1 - q));
    for b in 0..amps.len() {
        if b & tmask != 0 {
            continue;
        }
        if let Some(cm) = cmask {
            if b & cm == 0 {
                continue;
            }
        }
        let (a0, a1) = (amps[b], amps[b | tmask]);
        amps[b] = a0 * c + a1 * ms;
        amps[b | tmask] = a0 * ms + a1 * c;
    }
}
