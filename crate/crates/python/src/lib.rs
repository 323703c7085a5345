//! Python bindings: expectation problems, shift rules, error functions, shift
//! optimization and the scan/scaling/VQE drivers.
//!
//! Structured results cross the boundary as JSON and come back as plain dicts/lists.
use agpsr::erroranalysis::{self, ErrorFunctionCurve};
use agpsr::experiments::{self, ScalingConfig, ScanConfig};
use agpsr::numerics::ComplexMatrix;
use agpsr::quantum::{
    CostConfig, ExpectationProblem, GeneratorConfig, HermitianOperator, InitialStateConfig, InteractionRegime, LatticeSpec,
    Layout, NeutralAtomConfig, ShotModel,
};
use agpsr::shiftrules::{RuleKind, ShiftRule, ShiftRuleSpec, ShiftSchedule};
use agpsr::spectral::GapSet;
use agpsr::varianceopt::{self, ShiftBounds};
use agpsr::vqe::{self, VqeConfig, VqeProblem};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyString;
use serde::de::DeserializeOwned;
use serde::Serialize;

create_exception!(agpsr_py, AgpsrError, PyValueError);

fn err(e: agpsr::Error) -> PyErr {
    AgpsrError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| AgpsrError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Accepts a JSON string or anything `json.dumps` understands.
fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = if obj.is_instance_of::<PyString>() {
        obj.extract()?
    } else {
        obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?
    };
    serde_json::from_str(&text).map_err(|e| AgpsrError::new_err(format!("invalid config: {e}")))
}

fn matrix(re: Vec<Vec<f64>>, im: Option<Vec<Vec<f64>>>) -> PyResult<ComplexMatrix> {
    ComplexMatrix::from_parts(&re, im.as_deref()).map_err(err)
}

fn shot_model(shots: Option<u64>, seed: u64) -> PyResult<ShotModel> {
    match shots {
        Some(n) => ShotModel::finite(n, seed).map_err(err),
        None => Ok(ShotModel::exact()),
    }
}

fn rule_kind(kind: &str) -> PyResult<RuleKind> {
    match kind.to_ascii_lowercase().as_str() {
        "psr" => Ok(RuleKind::Psr),
        "gpsr" => Ok(RuleKind::Gpsr),
        "agpsr" => Ok(RuleKind::Agpsr),
        other => Err(AgpsrError::new_err(format!("unknown rule kind {other:?}; expected psr, gpsr or agpsr"))),
    }
}

/// `f(x) = <ψ0| U(x)† C U(x) |ψ0>` with `U(x) = exp(-i x G / 2)`.
#[pyclass(name = "Problem", module = "agpsr_py", frozen)]
struct PyProblem {
    inner: ExpectationProblem,
}

#[pymethods]
impl PyProblem {
    /// From dense matrices; the cost defaults to `Σ Z_i` and the state to `|0...0>`.
    #[staticmethod]
    #[pyo3(signature = (generator_re, generator_im = None, cost_re = None, cost_im = None, state_seed = None))]
    fn from_matrices(
        generator_re: Vec<Vec<f64>>,
        generator_im: Option<Vec<Vec<f64>>>,
        cost_re: Option<Vec<Vec<f64>>>,
        cost_im: Option<Vec<Vec<f64>>>,
        state_seed: Option<u64>,
    ) -> PyResult<Self> {
        let g = HermitianOperator::new(matrix(generator_re, generator_im)?).map_err(err)?;
        let n = g.n_qubits().ok_or_else(|| AgpsrError::new_err("generator dimension is not a power of two"))?;
        let c = match cost_re {
            Some(re) => HermitianOperator::new(matrix(re, cost_im)?).map_err(err)?,
            None => agpsr::quantum::sum_z(n).map_err(err)?,
        };
        let psi = state(state_seed).build(n).map_err(err)?;
        Ok(Self { inner: ExpectationProblem::new(g, c, psi).map_err(err)? })
    }

    /// Neutral-atom generator on a chain or `rows × cols` grid with cost `Σ Z_i`.
    #[staticmethod]
    #[pyo3(signature = (n_qubits, regime = "weak", rows = None, state_seed = None))]
    fn neutral_atom(n_qubits: usize, regime: &str, rows: Option<usize>, state_seed: Option<u64>) -> PyResult<Self> {
        let regime = match regime {
            "weak" => InteractionRegime::Weak,
            "balanced" => InteractionRegime::Balanced,
            "strong" => InteractionRegime::Strong,
            other => return Err(AgpsrError::new_err(format!("unknown regime {other:?}"))),
        };
        let layout = match rows {
            Some(r) if r > 0 && n_qubits % r == 0 => Layout::Grid { rows: r, cols: n_qubits / r },
            Some(r) => return Err(AgpsrError::new_err(format!("{n_qubits} atoms do not fill {r} rows"))),
            None => Layout::Chain,
        };
        let gen = GeneratorConfig::NeutralAtom(NeutralAtomConfig {
            n_qubits,
            omega: 1.0,
            j: None,
            lattice: Some(LatticeSpec::with_regime(layout, regime)),
        });
        let inner = experiments::build_problem(&gen, &state(state_seed), &CostConfig::SumZ).map_err(err)?;
        Ok(Self { inner })
    }

    /// From a `{"generator": ..., "initial_state": ..., "cost": ...}` config.
    #[staticmethod]
    fn from_config(config: &Bound<'_, PyAny>) -> PyResult<Self> {
        #[derive(serde::Deserialize)]
        struct Cfg {
            generator: GeneratorConfig,
            #[serde(default)]
            initial_state: InitialStateConfig,
            #[serde(default)]
            cost: CostConfig,
        }
        let cfg: Cfg = from_py(config)?;
        Ok(Self { inner: experiments::build_problem(&cfg.generator, &cfg.initial_state, &cfg.cost).map_err(err)? })
    }

    #[getter]
    fn n_qubits(&self) -> usize {
        self.inner.initial_state().n_qubits()
    }

    #[pyo3(signature = (x, shots = None, seed = 0))]
    fn value(&self, x: f64, shots: Option<u64>, seed: u64) -> PyResult<f64> {
        Ok(self.inner.value(x, &shot_model(shots, seed)?))
    }

    /// Exact derivative from the commutator.
    fn derivative(&self, x: f64) -> f64 {
        self.inner.derivative(x)
    }

    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.generator().eigenvalues().to_vec()
    }

    /// Unique spectral gaps of the generator, ascending.
    fn gaps(&self) -> Vec<f64> {
        GapSet::of(self.inner.generator()).gaps
    }

    fn __repr__(&self) -> String {
        format!("Problem(n_qubits={}, gaps={})", self.n_qubits(), self.gaps().len())
    }
}

fn state(seed: Option<u64>) -> InitialStateConfig {
    seed.map_or(InitialStateConfig::Zero, |seed| InitialStateConfig::Random { seed })
}

#[pyclass(name = "ShiftRule", module = "agpsr_py", frozen)]
struct PyShiftRule {
    inner: ShiftRule,
}

#[pymethods]
impl PyShiftRule {
    /// `kind` is `psr`, `gpsr` or `agpsr`; without `shifts` the kind's default schedule is used.
    #[new]
    #[pyo3(signature = (kind, gaps, shifts = None))]
    fn new(kind: &str, gaps: Vec<f64>, shifts: Option<Vec<f64>>) -> PyResult<Self> {
        let kind = rule_kind(kind)?;
        let spec = match shifts {
            Some(s) => ShiftRuleSpec::new(kind, gaps, s, ShotModel::exact()),
            None => ShiftRuleSpec::with_schedule(kind, gaps, &ShiftSchedule::default_for(kind), ShotModel::exact()),
        }
        .map_err(err)?;
        Ok(Self { inner: spec.prepare().map_err(err)? })
    }

    /// Pseudo-gaps `a, 2a, ..., Ka`.
    #[staticmethod]
    #[pyo3(signature = (k, step_a, shifts = None))]
    fn agpsr(k: usize, step_a: f64, shifts: Option<Vec<f64>>) -> PyResult<Self> {
        let gammas = agpsr::spectral::PseudoGapConfig::uniform(k, step_a).gammas().map_err(err)?;
        Self::new("agpsr", gammas, shifts)
    }

    #[getter]
    fn gaps(&self) -> Vec<f64> {
        self.inner.spec().gaps.clone()
    }

    #[getter]
    fn shifts(&self) -> Vec<f64> {
        self.inner.spec().shifts.clone()
    }

    #[getter]
    fn condition_estimate(&self) -> f64 {
        self.inner.condition_estimate()
    }

    #[getter]
    fn expectation_calls(&self) -> usize {
        self.inner.spec().expectation_calls()
    }

    /// Derivative at `x` of a `Problem` or of any callable `f(x) -> float`.
    #[pyo3(signature = (f, x, shots = None, seed = 0))]
    fn estimate(&self, py: Python<'_>, f: &Bound<'_, PyAny>, x: f64, shots: Option<u64>, seed: u64) -> PyResult<f64> {
        if let Ok(problem) = f.cast::<PyProblem>() {
            let problem = problem.get();
            let model = shot_model(shots, seed)?;
            let rule = &self.inner;
            return py
                .detach(|| rule.estimate_with_shots(&problem.inner, x, &model))
                .map(|r| r.estimate)
                .map_err(err);
        }
        if shots.is_some() {
            return Err(AgpsrError::new_err("shot sampling needs a Problem, not a callable"));
        }
        let shifts = &self.inner.spec().shifts;
        let mut plus = Vec::with_capacity(shifts.len());
        let mut minus = Vec::with_capacity(shifts.len());
        for &d in shifts {
            plus.push(f.call1((x + d,))?.extract::<f64>()?);
            minus.push(f.call1((x - d,))?.extract::<f64>()?);
        }
        self.inner.combine(plus, minus).map(|r| r.estimate).map_err(err)
    }

    fn __repr__(&self) -> String {
        let s = self.inner.spec();
        format!("ShiftRule(kind={:?}, K={}, condition={:.3e})", s.kind, s.k(), self.inner.condition_estimate())
    }
}

/// `Q_K(Δ) = ξ(Δ) - Δ` for each `Δ` in `deltas`.
#[pyfunction]
fn error_function(gammas: Vec<f64>, shifts: Vec<f64>, deltas: Vec<f64>) -> PyResult<Vec<f64>> {
    let curve = ErrorFunctionCurve::sample(&gammas, &shifts, &deltas).map_err(err)?;
    Ok(curve.samples.into_iter().map(|(_, q)| q).collect())
}

#[pyfunction]
fn xi(delta: f64, gammas: Vec<f64>, shifts: Vec<f64>) -> PyResult<f64> {
    erroranalysis::xi(delta, &gammas, &shifts).map_err(err)
}

/// Shot-noise variance prefactor `Σ_s Σ_k g_s² a_sk²`.
#[pyfunction]
fn g_objective(gaps: Vec<f64>, shifts: Vec<f64>) -> f64 {
    varianceopt::g_objective(&gaps, &shifts)
}

/// Variance-minimizing shifts; returns the optimization report as a dict.
#[pyfunction]
#[pyo3(signature = (gaps, shifts, lo = None, hi = None))]
fn optimize_shifts<'py>(py: Python<'py>, gaps: Vec<f64>, shifts: Vec<f64>, lo: Option<f64>, hi: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
    let d = ShiftBounds::default_for(&gaps);
    let bounds = ShiftBounds::new(lo.unwrap_or(d.lo), hi.unwrap_or(d.hi)).map_err(err)?;
    let rep = varianceopt::optimize_shifts(&gaps, &shifts, bounds).map_err(err)?;
    to_py(py, &rep)
}

#[pyfunction]
fn relative_error<'py>(py: Python<'py>, estimates: Vec<f64>, exact: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    if estimates.len() != exact.len() {
        return Err(AgpsrError::new_err("estimates and exact values differ in length"));
    }
    to_py(py, &experiments::relative_error(&estimates, &exact))
}

/// Runs a derivative scan from a scan config (dict or JSON string).
#[pyfunction]
fn derivative_scan<'py>(py: Python<'py>, config: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let cfg: ScanConfig = from_py(config)?;
    let res = py.detach(|| experiments::derivative_scan(&cfg)).map_err(err)?;
    to_py(py, &res)
}

/// Gap counts and minimal K per qubit number; defaults to the standard study.
#[pyfunction]
#[pyo3(signature = (config = None))]
fn scaling_study<'py>(py: Python<'py>, config: Option<&Bound<'py, PyAny>>) -> PyResult<Bound<'py, PyAny>> {
    let cfg: ScalingConfig = match config {
        Some(c) => from_py(c)?,
        None => ScalingConfig::default(),
    };
    let rows = py.detach(|| experiments::scaling_study(&cfg)).map_err(err)?;
    to_py(py, &rows)
}

/// Seeded VQE runs; returns `{"summary": ..., "traces": [...]}`.
#[pyfunction]
fn run_vqe<'py>(py: Python<'py>, config: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let cfg: VqeConfig = from_py(config)?;
    cfg.validate().map_err(err)?;
    let (summary, traces) = py
        .detach(|| {
            let problem = VqeProblem::new(cfg.clone())?;
            let traces = vqe::run_vqe(&cfg)?;
            Ok::<_, agpsr::Error>((vqe::summarize(&problem, &traces), traces))
        })
        .map_err(err)?;
    to_py(py, &serde_json::json!({ "summary": summary, "traces": traces }))
}

#[pymodule]
fn agpsr_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("AgpsrError", m.py().get_type::<AgpsrError>())?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PyShiftRule>()?;
    m.add_function(wrap_pyfunction!(error_function, m)?)?;
    m.add_function(wrap_pyfunction!(xi, m)?)?;
    m.add_function(wrap_pyfunction!(g_objective, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_shifts, m)?)?;
    m.add_function(wrap_pyfunction!(relative_error, m)?)?;
    m.add_function(wrap_pyfunction!(derivative_scan, m)?)?;
    m.add_function(wrap_pyfunction!(scaling_study, m)?)?;
    m.add_function(wrap_pyfunction!(run_vqe, m)?)?;
    Ok(())
}
