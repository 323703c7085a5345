//! Statevector simulation of `f(x) = <ψ0| U†(x) C U(x) |ψ0>` with `U(x) = exp(-i x G / 2)`.
//!
//! Evolution goes through the generator's cached eigendecomposition, so every
//! evaluation is exact up to rounding and the same eigenvalues feed the gap analysis.
//! Qubit 0 is the most significant bit of a basis index.

mod config;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{hermitian_eig, ComplexMatrix, EigenDecomposition, NumericsConfig, RealMatrix};

pub use config::{
    CostConfig, GeneratorConfig, InitialStateConfig, InteractionRegime, LatticeSpec, Layout, MatrixDump,
    NeutralAtomConfig,
};

const NORM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumState {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl QuantumState {
    /// `|0...0>`.
    pub fn zero(n_qubits: usize) -> Self {
        Self::basis(n_qubits, 0)
    }

    pub fn basis(n_qubits: usize, index: usize) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[index] = Complex64::new(1.0, 0.0);
        Self { n_qubits, amplitudes }
    }

    /// Haar-like random state from normalized complex Gaussian amplitudes.
    pub fn random(n_qubits: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amplitudes: Vec<Complex64> = (0..1usize << n_qubits)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        Self::normalized(n_qubits, amplitudes).expect("gaussian vector is nonzero")
    }

    /// Takes amplitudes that must already be normalized within 1e-10.
    pub fn new(n_qubits: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        check_len(n_qubits, amplitudes.len())?;
        let norm = norm(&amplitudes);
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::invalid(format!("state norm is {norm}, expected 1")));
        }
        Ok(Self { n_qubits, amplitudes })
    }

    pub fn normalized(n_qubits: usize, mut amplitudes: Vec<Complex64>) -> Result<Self> {
        check_len(n_qubits, amplitudes.len())?;
        let norm = norm(&amplitudes);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::invalid("cannot normalize a zero state"));
        }
        amplitudes.iter_mut().for_each(|a| *a /= norm);
        Ok(Self { n_qubits, amplitudes })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amplitudes)
    }

    pub fn inner(&self, other: &QuantumState) -> Complex64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }

    pub(crate) fn from_raw(n_qubits: usize, amplitudes: Vec<Complex64>) -> Self {
        Self { n_qubits, amplitudes }
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }
}

fn check_len(n_qubits: usize, len: usize) -> Result<()> {
    if len != 1usize << n_qubits {
        return Err(Error::DimensionMismatch(format!("{n_qubits} qubits need {} amplitudes, got {len}", 1usize << n_qubits)));
    }
    Ok(())
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// Hermitian matrix together with its eigendecomposition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HermitianOperator {
    matrix: ComplexMatrix,
    eig: EigenDecomposition,
}

impl HermitianOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let eig = hermitian_eig(&matrix)?;
        let scale = matrix.max_abs().max(f64::MIN_POSITIVE);
        let residual = eig.reconstruction_residual(&matrix);
        if residual > 1e-10 * scale.max(1.0) {
            return Err(Error::NoConvergence { iterations: NumericsConfig::default().eig_max_sweeps });
        }
        Ok(Self { matrix, eig })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn eig(&self) -> &EigenDecomposition {
        &self.eig
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eig.eigenvalues
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    /// Number of qubits when the dimension is a power of two.
    pub fn n_qubits(&self) -> Option<usize> {
        let d = self.dim();
        d.is_power_of_two().then(|| d.trailing_zeros() as usize)
    }

    pub fn dump(&self) -> MatrixDump {
        MatrixDump::from_matrix(&self.matrix)
    }
}

/// Generator `G` of `U(x) = exp(-i x G / 2)`.
pub type Generator = HermitianOperator;
/// Observable `C` whose expectation defines `f(x)`.
pub type CostOperator = HermitianOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shots {
    Infinite,
    Finite(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotModel {
    pub shots: Shots,
    pub seed: u64,
}

impl ShotModel {
    pub fn exact() -> Self {
        Self { shots: Shots::Infinite, seed: 0 }
    }

    pub fn finite(n_shots: u64, seed: u64) -> Result<Self> {
        if n_shots == 0 {
            return Err(Error::invalid("n_shots must be at least 1"));
        }
        Ok(Self { shots: Shots::Finite(n_shots), seed })
    }

    pub fn is_exact(&self) -> bool {
        self.shots == Shots::Infinite
    }

    pub fn n_shots(&self) -> Option<u64> {
        match self.shots {
            Shots::Infinite => None,
            Shots::Finite(n) => Some(n),
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

impl Default for ShotModel {
    fn default() -> Self {
        Self::exact()
    }
}

pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::from_real(&RealMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).expect("2x2"))
}

pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::from_diag(&[1.0, -1.0])
}

/// `I ⊗ ... ⊗ op ⊗ ... ⊗ I` with `op` acting on `qubit`.
pub fn embed(op: &ComplexMatrix, qubit: usize, n_qubits: usize) -> ComplexMatrix {
    let id = ComplexMatrix::identity(2);
    (0..n_qubits).fold(ComplexMatrix::identity(1), |acc, q| acc.kron(if q == qubit { op } else { &id }))
}

/// `Σ_i Z_i`.
pub fn sum_z(n_qubits: usize) -> Result<CostOperator> {
    let diag: Vec<f64> = (0..1usize << n_qubits)
        .map(|b| (0..n_qubits).map(|q| if bit(b, q, n_qubits) == 0 { 1.0 } else { -1.0 }).sum())
        .collect();
    HermitianOperator::new(ComplexMatrix::from_diag(&diag))
}

#[inline]
pub(crate) fn bit(index: usize, qubit: usize, n_qubits: usize) -> usize {
    (index >> (n_qubits - 1 - qubit)) & 1
}

/// Pairwise interaction strengths `J_ij`.
#[derive(Debug, Clone, PartialEq)]
pub enum Interactions {
    None,
    Matrix(RealMatrix),
    Lattice { positions: Vec<(f64, f64)>, c6: f64 },
}

impl Interactions {
    fn matrix(&self, n_qubits: usize) -> Result<RealMatrix> {
        match self {
            Interactions::None => Ok(RealMatrix::zeros(n_qubits, n_qubits)),
            Interactions::Matrix(j) => {
                if j.rows() != n_qubits || j.cols() != n_qubits {
                    return Err(Error::DimensionMismatch(format!(
                        "interaction matrix is {}x{}, expected {n_qubits}x{n_qubits}",
                        j.rows(),
                        j.cols()
                    )));
                }
                for i in 0..n_qubits {
                    if j[(i, i)] != 0.0 {
                        return Err(Error::invalid("interaction matrix must have a zero diagonal"));
                    }
                    for k in 0..i {
                        if (j[(i, k)] - j[(k, i)]).abs() > 1e-12 * j.max_abs().max(1.0) {
                            return Err(Error::invalid("interaction matrix must be symmetric"));
                        }
                    }
                }
                Ok(j.clone())
            }
            Interactions::Lattice { positions, c6 } => {
                if positions.len() != n_qubits {
                    return Err(Error::DimensionMismatch(format!(
                        "{} lattice sites for {n_qubits} qubits",
                        positions.len()
                    )));
                }
                let mut j = RealMatrix::zeros(n_qubits, n_qubits);
                for a in 0..n_qubits {
                    for b in 0..a {
                        let (dx, dy) = (positions[a].0 - positions[b].0, positions[a].1 - positions[b].1);
                        let r2 = dx * dx + dy * dy;
                        if r2 == 0.0 {
                            return Err(Error::invalid("two atoms share a lattice site"));
                        }
                        let v = c6 / (r2 * r2 * r2);
                        j[(a, b)] = v;
                        j[(b, a)] = v;
                    }
                }
                Ok(j)
            }
        }
    }
}

/// `G = 2H/Ω` for `H = Σ (Ω/2) σx_i + Σ_{j<i} J_ij n_i n_j`, `n = (σz + I)/2`, so that
/// `exp(-i t H) = exp(-i (x/2) G)` with `x = Ω t`.
pub fn neutral_atom_generator(n_qubits: usize, omega: f64, interactions: &Interactions) -> Result<Generator> {
    if n_qubits == 0 {
        return Err(Error::invalid("need at least one qubit"));
    }
    if !(omega > 0.0) {
        return Err(Error::invalid(format!("drive amplitude must be positive, got {omega}")));
    }
    let j = interactions.matrix(n_qubits)?;
    let dim = 1usize << n_qubits;
    let mut g = ComplexMatrix::zeros(dim, dim);
    for b in 0..dim {
        for q in 0..n_qubits {
            let flipped = b ^ (1 << (n_qubits - 1 - q));
            g[(b, flipped)] += Complex64::new(1.0, 0.0);
        }
        let mut diag = 0.0;
        for a in 0..n_qubits {
            if bit(b, a, n_qubits) != 0 {
                continue;
            }
            for c in 0..a {
                if bit(b, c, n_qubits) == 0 {
                    diag += 2.0 * j[(a, c)] / omega;
                }
            }
        }
        g[(b, b)] += Complex64::new(diag, 0.0);
    }
    HermitianOperator::new(g)
}

/// Random Hermitian matrix with i.i.d. complex Gaussian entries, rescaled so its spectral
/// spread `λmax - λmin` equals `spread` (when positive).
pub fn random_hermitian(dim: usize, spread: f64, seed: u64) -> Result<HermitianOperator> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = ComplexMatrix::zeros(dim, dim);
    for i in 0..dim {
        m[(i, i)] = Complex64::new(rng.sample(StandardNormal), 0.0);
        for j in 0..i {
            let z = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) * std::f64::consts::FRAC_1_SQRT_2;
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    let op = HermitianOperator::new(m)?;
    let ev = op.eigenvalues();
    let current = ev[ev.len() - 1] - ev[0];
    if spread > 0.0 && current > 0.0 {
        HermitianOperator::new(op.matrix().scale(spread / current))
    } else {
        Ok(op)
    }
}

fn check_dims(g: &Generator, c: &CostOperator, psi: &QuantumState) -> Result<()> {
    if g.dim() != psi.dim() || c.dim() != psi.dim() {
        return Err(Error::DimensionMismatch(format!(
            "generator {}, cost {}, state {}",
            g.dim(),
            c.dim(),
            psi.dim()
        )));
    }
    Ok(())
}

/// `ψ(x) = V diag(exp(-i x λ / 2)) V† ψ0`.
pub fn evolve(g: &Generator, x: f64, psi0: &QuantumState) -> Result<QuantumState> {
    if g.dim() != psi0.dim() {
        return Err(Error::DimensionMismatch(format!("generator {} vs state {}", g.dim(), psi0.dim())));
    }
    let v = &g.eig().eigenvectors;
    let coeffs = v.adjoint().matvec(psi0.amplitudes());
    let phased: Vec<Complex64> = coeffs
        .iter()
        .zip(g.eigenvalues())
        .map(|(c, &l)| c * Complex64::from_polar(1.0, -0.5 * x * l))
        .collect();
    Ok(QuantumState::from_raw(psi0.n_qubits(), v.matvec(&phased)))
}

fn expectation_value(c: &ComplexMatrix, psi: &[Complex64]) -> f64 {
    let cpsi = c.matvec(psi);
    psi.iter().zip(&cpsi).map(|(a, b)| (a.conj() * b).re).sum()
}

/// `f(x)`, exact or estimated from `n_shots` projective measurements of `C`.
pub fn expectation(g: &Generator, c: &CostOperator, x: f64, psi0: &QuantumState, shots: &ShotModel) -> Result<f64> {
    check_dims(g, c, psi0)?;
    let psi = evolve(g, x, psi0)?;
    match shots.shots {
        Shots::Infinite => Ok(expectation_value(c.matrix(), psi.amplitudes())),
        Shots::Finite(n) => {
            let probs: Vec<f64> =
                c.eig().eigenvectors.adjoint().matvec(psi.amplitudes()).iter().map(|a| a.norm_sqr()).collect();
            Ok(sample_mean(c.eigenvalues(), &probs, n, shots.seed))
        }
    }
}

/// Mean of `n` draws of `outcomes[i]` with probability `probs[i]`.
pub fn sample_mean(outcomes: &[f64], probs: &[f64], n: u64, seed: u64) -> f64 {
    let mut cumulative = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for &p in probs {
        acc += p;
        cumulative.push(acc);
    }
    let total = acc;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    for _ in 0..n {
        let u: f64 = rng.random::<f64>() * total;
        let idx = cumulative.partition_point(|&c| c <= u).min(outcomes.len() - 1);
        sum += outcomes[idx];
    }
    sum / n as f64
}

/// Analytic derivative `(i/2) <ψ(x)| [G, C] |ψ(x)>`.
pub fn exact_derivative_oracle(g: &Generator, c: &CostOperator, x: f64, psi0: &QuantumState) -> Result<f64> {
    check_dims(g, c, psi0)?;
    let psi = evolve(g, x, psi0)?;
    let commutator = g.matrix().matmul(c.matrix()).sub(&c.matrix().matmul(g.matrix()));
    let amp = psi.amplitudes();
    let val: Complex64 = amp.iter().zip(commutator.matvec(amp)).map(|(a, b)| a.conj() * b).sum();
    Ok((Complex64::new(0.0, 0.5) * val).re)
}

/// Variance of a single measurement of `C` in `ψ(x)`: `<C²> - <C>²`.
pub fn measurement_variance(g: &Generator, c: &CostOperator, x: f64, psi0: &QuantumState) -> Result<f64> {
    check_dims(g, c, psi0)?;
    let psi = evolve(g, x, psi0)?;
    let coeffs = c.eig().eigenvectors.adjoint().matvec(psi.amplitudes());
    let (mut m1, mut m2) = (0.0, 0.0);
    for (a, &l) in coeffs.iter().zip(c.eigenvalues()) {
        let p = a.norm_sqr();
        m1 += p * l;
        m2 += p * l * l;
    }
    Ok((m2 - m1 * m1).max(0.0))
}

/// Precomputed `f(x)` for one generator, cost operator and initial state.
///
/// Everything is rotated into the generator eigenbasis once, so an exact
/// evaluation is a phase multiply plus one matrix-vector product.
#[derive(Debug, Clone)]
pub struct ExpectationProblem {
    generator: Generator,
    cost: CostOperator,
    psi0: QuantumState,
    coeffs: Vec<Complex64>,
    cost_rotated: ComplexMatrix,
    to_cost_basis: ComplexMatrix,
}

impl ExpectationProblem {
    pub fn new(generator: Generator, cost: CostOperator, psi0: QuantumState) -> Result<Self> {
        check_dims(&generator, &cost, &psi0)?;
        let v = &generator.eig().eigenvectors;
        let vh = v.adjoint();
        let coeffs = vh.matvec(psi0.amplitudes());
        let cost_rotated = vh.matmul(cost.matrix()).matmul(v);
        let to_cost_basis = cost.eig().eigenvectors.adjoint().matmul(v);
        Ok(Self { generator, cost, psi0, coeffs, cost_rotated, to_cost_basis })
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn cost(&self) -> &CostOperator {
        &self.cost
    }

    pub fn initial_state(&self) -> &QuantumState {
        &self.psi0
    }

    fn phased(&self, x: f64) -> Vec<Complex64> {
        self.coeffs
            .iter()
            .zip(self.generator.eigenvalues())
            .map(|(c, &l)| c * Complex64::from_polar(1.0, -0.5 * x * l))
            .collect()
    }

    pub fn exact(&self, x: f64) -> f64 {
        expectation_value(&self.cost_rotated, &self.phased(x))
    }

    pub fn value(&self, x: f64, shots: &ShotModel) -> f64 {
        match shots.shots {
            Shots::Infinite => self.exact(x),
            Shots::Finite(n) => {
                let probs: Vec<f64> = self.to_cost_basis.matvec(&self.phased(x)).iter().map(|a| a.norm_sqr()).collect();
                sample_mean(self.cost.eigenvalues(), &probs, n, shots.seed)
            }
        }
    }

    /// `<C²> - <C>²` at `x`.
    pub fn variance(&self, x: f64) -> f64 {
        let amps = self.to_cost_basis.matvec(&self.phased(x));
        let (mut m1, mut m2) = (0.0, 0.0);
        for (a, &l) in amps.iter().zip(self.cost.eigenvalues()) {
            let p = a.norm_sqr();
            m1 += p * l;
            m2 += p * l * l;
        }
        (m2 - m1 * m1).max(0.0)
    }

    /// Analytic derivative in the generator eigenbasis, `Σ_ij (i/2)(λ_i - λ_j) conj(a_i) C'_ij a_j`.
    pub fn derivative(&self, x: f64) -> f64 {
        let a = self.phased(x);
        let lam = self.generator.eigenvalues();
        let n = a.len();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let mut row = Complex64::new(0.0, 0.0);
            for j in 0..n {
                row += (lam[i] - lam[j]) * self.cost_rotated[(i, j)] * a[j];
            }
            acc += a[i].conj() * row;
        }
        (Complex64::new(0.0, 0.5) * acc).re
    }
}

/// `exp(-i θ σx / 2)` entries `(cos, -i sin)`; shared by the circuit simulator.
pub(crate) fn rx_entries(theta: f64) -> (f64, Complex64) {
    let half = 0.5 * theta;
    (half.cos(), Complex64::new(0.0, -half.sin()))
}
