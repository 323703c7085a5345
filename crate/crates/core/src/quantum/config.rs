use serde::{Deserialize, Serialize};

use super::{neutral_atom_generator, random_hermitian, sum_z, CostOperator, Generator, HermitianOperator, Interactions, QuantumState};
use crate::error::{Error, Result};
use crate::numerics::{ComplexMatrix, RealMatrix};

/// Dense matrix as nested real/imaginary rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDump {
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

impl MatrixDump {
    pub fn from_matrix(m: &ComplexMatrix) -> Self {
        let (re, im) = m.to_parts();
        let any_im = im.iter().flatten().any(|v| *v != 0.0);
        Self { re, im: any_im.then_some(im) }
    }

    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        ComplexMatrix::from_parts(&self.re, self.im.as_deref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layout {
    Chain,
    Grid { rows: usize, cols: usize },
}

impl Layout {
    /// Site coordinates in units of the lattice spacing, row-major for grids.
    pub fn positions(&self, n_qubits: usize) -> Result<Vec<(f64, f64)>> {
        match *self {
            Layout::Chain => Ok((0..n_qubits).map(|i| (i as f64, 0.0)).collect()),
            Layout::Grid { rows, cols } => {
                if rows * cols != n_qubits {
                    return Err(Error::DimensionMismatch(format!("{rows}x{cols} grid for {n_qubits} qubits")));
                }
                Ok((0..n_qubits).map(|i| ((i % cols) as f64, (i / cols) as f64)).collect())
            }
        }
    }
}

/// Named nearest-neighbour `J/Ω` presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionRegime {
    Weak,
    Balanced,
    Strong,
}

impl InteractionRegime {
    pub fn nn_ratio(self) -> f64 {
        match self {
            InteractionRegime::Weak => 0.5,
            InteractionRegime::Balanced => 1.0,
            InteractionRegime::Strong => 4.0,
        }
    }
}

/// Atoms on a lattice with `J_ij = C6 / r_ij^6`.
///
/// `c6` wins over `nn_ratio`, which wins over `regime`; with none set the regime is weak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub layout: Layout,
    #[serde(default = "one")]
    pub spacing: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c6: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nn_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<InteractionRegime>,
}

fn one() -> f64 {
    1.0
}

impl LatticeSpec {
    pub fn with_regime(layout: Layout, regime: InteractionRegime) -> Self {
        Self { layout, spacing: 1.0, c6: None, nn_ratio: None, regime: Some(regime) }
    }

    pub fn with_ratio(layout: Layout, nn_ratio: f64) -> Self {
        Self { layout, spacing: 1.0, c6: None, nn_ratio: Some(nn_ratio), regime: None }
    }

    pub fn interactions(&self, n_qubits: usize, omega: f64) -> Result<Interactions> {
        if !(self.spacing > 0.0) {
            return Err(Error::invalid("lattice spacing must be positive"));
        }
        let c6 = match (self.c6, self.nn_ratio, self.regime) {
            (Some(c6), _, _) => c6,
            (None, Some(r), _) => r * omega * self.spacing.powi(6),
            (None, None, regime) => regime.unwrap_or(InteractionRegime::Weak).nn_ratio() * omega * self.spacing.powi(6),
        };
        let positions = self
            .layout
            .positions(n_qubits)?
            .into_iter()
            .map(|(x, y)| (x * self.spacing, y * self.spacing))
            .collect();
        Ok(Interactions::Lattice { positions, c6 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeutralAtomConfig {
    pub n_qubits: usize,
    #[serde(default = "one")]
    pub omega: f64,
    /// Explicit symmetric interaction matrix; takes precedence over `lattice`.
    #[serde(rename = "J", default, skip_serializing_if = "Option::is_none")]
    pub j: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeSpec>,
}

impl NeutralAtomConfig {
    pub fn interactions(&self) -> Result<Interactions> {
        match (&self.j, &self.lattice) {
            (Some(j), _) => Ok(Interactions::Matrix(RealMatrix::from_rows(j)?)),
            (None, Some(lattice)) => lattice.interactions(self.n_qubits, self.omega),
            (None, None) => Ok(Interactions::None),
        }
    }

    pub fn build(&self) -> Result<Generator> {
        neutral_atom_generator(self.n_qubits, self.omega, &self.interactions()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorConfig {
    NeutralAtom(NeutralAtomConfig),
    Matrix(MatrixDump),
    RandomHermitian {
        n_qubits: usize,
        seed: u64,
        /// Target spectral spread; 0 keeps the raw draw.
        #[serde(default)]
        spread: f64,
    },
}

impl GeneratorConfig {
    pub fn build(&self) -> Result<Generator> {
        match self {
            GeneratorConfig::NeutralAtom(cfg) => cfg.build(),
            GeneratorConfig::Matrix(dump) => {
                let m = dump.to_matrix()?;
                if !m.rows().is_power_of_two() {
                    return Err(Error::DimensionMismatch(format!("generator dimension {} is not a power of two", m.rows())));
                }
                HermitianOperator::new(m)
            }
            GeneratorConfig::RandomHermitian { n_qubits, seed, spread } => random_hermitian(1 << n_qubits, *spread, *seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostConfig {
    #[default]
    SumZ,
    Matrix(MatrixDump),
}

impl CostConfig {
    pub fn build(&self, n_qubits: usize) -> Result<CostOperator> {
        match self {
            CostConfig::SumZ => sum_z(n_qubits),
            CostConfig::Matrix(dump) => {
                let op = HermitianOperator::new(dump.to_matrix()?)?;
                if op.dim() != 1 << n_qubits {
                    return Err(Error::DimensionMismatch(format!("cost dimension {} for {n_qubits} qubits", op.dim())));
                }
                Ok(op)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialStateConfig {
    #[default]
    Zero,
    Basis {
        index: usize,
    },
    Random {
        seed: u64,
    },
}

impl InitialStateConfig {
    pub fn build(&self, n_qubits: usize) -> Result<QuantumState> {
        match *self {
            InitialStateConfig::Zero => Ok(QuantumState::zero(n_qubits)),
            InitialStateConfig::Basis { index } => {
                if index >= 1 << n_qubits {
                    return Err(Error::invalid(format!("basis index {index} out of range for {n_qubits} qubits")));
                }
                Ok(QuantumState::basis(n_qubits, index))
            }
            InitialStateConfig::Random { seed } => Ok(QuantumState::random(n_qubits, seed)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neutral_atom_json_roundtrip() {
        let text = r#"{"kind":"neutral_atom","n_qubits":2,"omega":1.0,"J":[[0,1],[1,0]]}"#;
        let cfg: GeneratorConfig = serde_json::from_str(text).unwrap();
        let g = cfg.build().unwrap();
        assert!((g.matrix().trace().re - 2.0).abs() < 1e-14);
        let back: GeneratorConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn lattice_regime_sets_nearest_neighbour_ratio() {
        let spec = LatticeSpec::with_regime(Layout::Grid { rows: 2, cols: 3 }, InteractionRegime::Strong);
        match spec.interactions(6, 2.0).unwrap() {
            Interactions::Lattice { positions, c6 } => {
                assert_eq!(positions.len(), 6);
                assert_eq!(positions[4], (1.0, 1.0));
                assert!((c6 - 8.0).abs() < 1e-15);
            }
            other => panic!("{other:?}"),
        }
        assert!(spec.interactions(5, 1.0).is_err());
    }

    #[test]
    fn matrix_dump_roundtrip() {
        let g = random_hermitian(4, 2.0, 9).unwrap();
        let dump = g.dump();
        let again = GeneratorConfig::Matrix(dump).build().unwrap();
        assert_eq!(again.matrix(), g.matrix());
    }

    #[test]
    fn state_configs() {
        assert_eq!(InitialStateConfig::Zero.build(2).unwrap(), QuantumState::zero(2));
        assert!(InitialStateConfig::Basis { index: 4 }.build(2).is_err());
        let r = InitialStateConfig::Random { seed: 3 }.build(3).unwrap();
        assert!((r.norm() - 1.0).abs() < 1e-12);
    }
}
