//! Spectral gaps of a generator and pseudo-gap construction.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::EigenDecomposition;
use crate::quantum::Generator;

/// Relative merge tolerance for gaps, in units of the spectral spread.
pub const DEFAULT_GAP_TOL: f64 = 1e-9;

/// Unique positive eigenvalue differences, ascending, with the number of eigenvalue pairs behind each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSet {
    pub gaps: Vec<f64>,
    pub multiplicities: Vec<usize>,
}

impl GapSet {
    pub fn new(gaps: Vec<f64>, multiplicities: Vec<usize>) -> Result<Self> {
        if gaps.len() != multiplicities.len() {
            return Err(Error::DimensionMismatch("gaps and multiplicities differ in length".into()));
        }
        validate_ascending_positive(&gaps, "gap")?;
        Ok(Self { gaps, multiplicities })
    }

    /// Each gap with multiplicity 1.
    pub fn from_gaps(gaps: Vec<f64>) -> Result<Self> {
        let n = gaps.len();
        Self::new(gaps, vec![1; n])
    }

    pub fn of(generator: &Generator) -> Self {
        unique_gaps(generator.eig(), None)
    }

    pub fn len(&self) -> usize {
        self.gaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaps.is_empty()
    }

    pub fn max(&self) -> Option<f64> {
        self.gaps.last().copied()
    }

    pub fn min(&self) -> Option<f64> {
        self.gaps.first().copied()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["gap", "multiplicity"])?;
        for (g, m) in self.gaps.iter().zip(&self.multiplicities) {
            out.write_record([format!("{g:.17e}"), m.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn validate_ascending_positive(values: &[f64], what: &str) -> Result<()> {
    for (i, &v) in values.iter().enumerate() {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::invalid(format!("{what} {i} is {v}; must be positive and finite")));
        }
        if i > 0 && v <= values[i - 1] {
            return Err(Error::invalid(format!("{what}s must be strictly ascending and distinct, got {values:?}")));
        }
    }
    Ok(())
}

/// All positive differences `λ_i - λ_j`, merged when closer than `tol`
/// (default `1e-9 · (λmax - λmin)`). A degenerate spectrum yields an empty set.
pub fn unique_gaps(eig: &EigenDecomposition, tol: Option<f64>) -> GapSet {
    let ev = &eig.eigenvalues;
    let spread = max_gap(eig);
    let tol = tol.unwrap_or(DEFAULT_GAP_TOL * spread);
    let mut diffs = Vec::with_capacity(ev.len() * ev.len().saturating_sub(1) / 2);
    for i in 0..ev.len() {
        for j in 0..i {
            let d = ev[i] - ev[j];
            if d > tol {
                diffs.push(d);
            }
        }
    }
    if diffs.is_empty() {
        if ev.len() > 1 {
            log::warn!("degenerate spectrum, no spectral gaps");
        }
        return GapSet { gaps: Vec::new(), multiplicities: Vec::new() };
    }
    diffs.sort_by(f64::total_cmp);
    let mut gaps = Vec::new();
    let mut multiplicities = Vec::new();
    let (mut start, mut sum, mut count) = (diffs[0], 0.0, 0usize);
    for &d in &diffs {
        if d - start > tol {
            gaps.push(sum / count as f64);
            multiplicities.push(count);
            start = d;
            sum = 0.0;
            count = 0;
        }
        sum += d;
        count += 1;
    }
    gaps.push(sum / count as f64);
    multiplicities.push(count);
    GapSet { gaps, multiplicities }
}

/// `λmax - λmin`; 0 (with a warning) for a single or fully degenerate eigenvalue.
pub fn max_gap(eig: &EigenDecomposition) -> f64 {
    let ev = &eig.eigenvalues;
    let spread = match (ev.first(), ev.last()) {
        (Some(lo), Some(hi)) => hi - lo,
        _ => 0.0,
    };
    if spread <= 0.0 {
        log::warn!("degenerate spectrum, maximal gap is 0");
        return 0.0;
    }
    spread
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PseudoGapStrategy {
    /// `γ_k = k·a`, `k = 1..K`.
    UniformStep { a: f64 },
    /// `{ε, 1, 2, ..., K-1}`.
    EpsilonInteger { epsilon: f64 },
    Explicit { gammas: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoGapConfig {
    #[serde(rename = "K")]
    pub k: usize,
    pub strategy: PseudoGapStrategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_max: Option<f64>,
}

impl PseudoGapConfig {
    pub fn uniform(k: usize, a: f64) -> Self {
        Self { k, strategy: PseudoGapStrategy::UniformStep { a }, delta_max: None }
    }

    pub fn epsilon_integer(k: usize, epsilon: f64) -> Self {
        Self { k, strategy: PseudoGapStrategy::EpsilonInteger { epsilon }, delta_max: None }
    }

    pub fn explicit(gammas: Vec<f64>) -> Self {
        Self { k: gammas.len(), strategy: PseudoGapStrategy::Explicit { gammas }, delta_max: None }
    }

    pub fn gammas(&self) -> Result<Vec<f64>> {
        pseudo_gaps(self)
    }
}

pub fn pseudo_gaps(cfg: &PseudoGapConfig) -> Result<Vec<f64>> {
    let k = cfg.k;
    if k == 0 {
        return Err(Error::invalid("need at least one pseudo-gap"));
    }
    let gammas: Vec<f64> = match &cfg.strategy {
        PseudoGapStrategy::UniformStep { a } => {
            if !(*a > 0.0) {
                return Err(Error::invalid(format!("pseudo-gap step must be positive, got {a}")));
            }
            (1..=k).map(|i| i as f64 * a).collect()
        }
        PseudoGapStrategy::EpsilonInteger { epsilon } => {
            std::iter::once(*epsilon).chain((1..k).map(|i| i as f64)).collect()
        }
        PseudoGapStrategy::Explicit { gammas } => {
            if gammas.len() != k {
                return Err(Error::DimensionMismatch(format!("K = {k} but {} explicit pseudo-gaps", gammas.len())));
            }
            gammas.clone()
        }
    };
    validate_ascending_positive(&gammas, "pseudo-gap")?;
    if let Some(dm) = cfg.delta_max {
        if let Some(&last) = gammas.last() {
            if last > dm * (1.0 + 1e-12) {
                return Err(Error::invalid(format!("pseudo-gap {last} exceeds maximal gap {dm}")));
            }
        }
    }
    Ok(gammas)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapHistogram {
    /// `bins + 1` edges spanning `[0, Δmax]`.
    pub edges: Vec<f64>,
    /// Fraction of eigenvalue pairs per bin; sums to 1.
    pub mass: Vec<f64>,
    /// `mass / bin width`.
    pub density: Vec<f64>,
}

/// Multiplicity-weighted gap distribution over right-closed bins `(lo, hi]`.
pub fn gap_histogram(gaps: &GapSet, bins: usize) -> Result<GapHistogram> {
    if gaps.is_empty() {
        return Err(Error::invalid("gap histogram of an empty gap set"));
    }
    if bins == 0 {
        return Err(Error::invalid("need at least one bin"));
    }
    let top = gaps.max().expect("nonempty");
    let width = top / bins as f64;
    let mut counts = vec![0.0; bins];
    let mut total = 0.0;
    for (&g, &m) in gaps.gaps.iter().zip(&gaps.multiplicities) {
        let idx = ((g / width).ceil() as usize).clamp(1, bins) - 1;
        counts[idx] += m as f64;
        total += m as f64;
    }
    let mass: Vec<f64> = counts.iter().map(|c| c / total).collect();
    Ok(GapHistogram {
        edges: (0..=bins).map(|i| i as f64 * width).collect(),
        density: mass.iter().map(|m| m / width).collect(),
        mass,
    })
}

/// `2^N (2^N - 1) / 2`, the gap count of a generic N-qubit generator.
pub fn max_gap_count(n_qubits: u32) -> u64 {
    let d = 1u64 << n_qubits;
    d * (d - 1) / 2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ComplexMatrix;

    fn eig_of(values: &[f64]) -> EigenDecomposition {
        EigenDecomposition { eigenvalues: values.to_vec(), eigenvectors: ComplexMatrix::identity(values.len()) }
    }

    #[test]
    fn gap_examples() {
        assert_eq!(unique_gaps(&eig_of(&[-1.0, 1.0]), None).gaps, vec![2.0]);
        let g = unique_gaps(&eig_of(&[-1.0, 0.0, 0.0, 1.0]), None);
        assert_eq!(g.gaps, vec![1.0, 2.0]);
        assert_eq!(g.multiplicities, vec![4, 1]);
        assert!(unique_gaps(&eig_of(&[3.0]), None).is_empty());
        assert!(unique_gaps(&eig_of(&[1.0, 1.0]), None).is_empty());
    }

    #[test]
    fn max_gap_examples() {
        assert_eq!(max_gap(&eig_of(&[-1.0, 1.0])), 2.0);
        assert_eq!(max_gap(&eig_of(&[0.0, 0.5, 3.0])), 3.0);
        assert_eq!(max_gap(&eig_of(&[2.0, 2.0])), 0.0);
    }

    #[test]
    fn nearly_equal_gaps_merge() {
        let g = unique_gaps(&eig_of(&[0.0, 1.0, 2.0 + 1e-13]), None);
        assert_eq!(g.len(), 2);
        assert_eq!(g.multiplicities, vec![2, 1]);
    }

    #[test]
    fn pseudo_gap_examples() {
        assert_eq!(pseudo_gaps(&PseudoGapConfig::uniform(4, 4.0)).unwrap(), vec![4.0, 8.0, 12.0, 16.0]);
        assert_eq!(pseudo_gaps(&PseudoGapConfig::epsilon_integer(3, 0.1)).unwrap(), vec![0.1, 1.0, 2.0]);
        assert_eq!(pseudo_gaps(&PseudoGapConfig::explicit(vec![2.0])).unwrap(), vec![2.0]);
    }

    #[test]
    fn pseudo_gap_rejections() {
        assert!(pseudo_gaps(&PseudoGapConfig::explicit(vec![0.0, 1.0])).is_err());
        assert!(pseudo_gaps(&PseudoGapConfig::explicit(vec![1.0, 1.0])).is_err());
        assert!(pseudo_gaps(&PseudoGapConfig::uniform(2, -1.0)).is_err());
        assert!(pseudo_gaps(&PseudoGapConfig::uniform(0, 1.0)).is_err());
        let mut cfg = PseudoGapConfig::uniform(4, 4.0);
        cfg.delta_max = Some(10.0);
        assert!(pseudo_gaps(&cfg).is_err());
    }

    #[test]
    fn histogram_examples() {
        let h = gap_histogram(&GapSet::from_gaps(vec![2.0]).unwrap(), 1).unwrap();
        assert_eq!(h.mass, vec![1.0]);
        let h = gap_histogram(&GapSet::from_gaps(vec![1.0, 2.0, 3.0]).unwrap(), 3).unwrap();
        for m in h.mass {
            assert!((m - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(gap_histogram(&GapSet::from_gaps(vec![]).unwrap(), 3).is_err());
    }

    #[test]
    fn csv_export() {
        let mut buf = Vec::new();
        GapSet::new(vec![1.0, 2.0], vec![4, 1]).unwrap().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "gap,multiplicity");
        assert!(lines[1].ends_with(",4"));
    }

    #[test]
    fn generic_gap_counts() {
        assert_eq!(max_gap_count(3), 28);
        assert_eq!(max_gap_count(6), 2016);
    }
}
