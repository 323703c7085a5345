//! Config files for the subcommands that have no matching core type.

use agpsr::quantum::{CostConfig, GeneratorConfig, InitialStateConfig};
use agpsr::shiftrules::ShiftSchedule;
use agpsr::spectral::{PseudoGapConfig, PseudoGapStrategy};
use agpsr::varianceopt::ShiftBounds;
use serde::{Deserialize, Serialize};

/// Defaults reproduce the error-function figure: `γ = {0.1, 1, ..., K-1}`, shifts
/// equidistant in `[π/4, π/2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorCurveConfig {
    #[serde(rename = "K", default = "default_k")]
    pub k: usize,
    #[serde(default = "default_strategy")]
    pub strategy: PseudoGapStrategy,
    #[serde(default = "default_curve_shifts")]
    pub shifts: ShiftSchedule,
    #[serde(default)]
    pub delta_min: f64,
    #[serde(default = "default_delta_max")]
    pub delta_max: f64,
    #[serde(default = "default_curve_points")]
    pub points: usize,
}

impl ErrorCurveConfig {
    pub fn pseudo_gaps(&self) -> PseudoGapConfig {
        PseudoGapConfig { k: self.k, strategy: self.strategy.clone(), delta_max: None }
    }
}

fn default_k() -> usize {
    3
}

fn default_strategy() -> PseudoGapStrategy {
    PseudoGapStrategy::EpsilonInteger { epsilon: 0.1 }
}

fn default_curve_shifts() -> ShiftSchedule {
    ShiftSchedule::Interval { lo: std::f64::consts::FRAC_PI_4, hi: std::f64::consts::FRAC_PI_2 }
}

fn default_delta_max() -> f64 {
    6.0
}

fn default_curve_points() -> usize {
    601
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceOptConfig {
    pub generator: GeneratorConfig,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(default = "one")]
    pub step_a: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<ShiftBounds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloConfig>,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

/// Seed-paired comparison of the starting and the optimized shifts under shot noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    #[serde(default = "default_mc_x")]
    pub x: f64,
    #[serde(default = "default_mc_shots")]
    pub shots: u64,
    #[serde(default = "default_mc_estimates")]
    pub estimates: usize,
    #[serde(default)]
    pub initial_state: InitialStateConfig,
    #[serde(default)]
    pub cost: CostConfig,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            x: default_mc_x(),
            shots: default_mc_shots(),
            estimates: default_mc_estimates(),
            initial_state: InitialStateConfig::default(),
            cost: CostConfig::default(),
        }
    }
}

fn default_mc_x() -> f64 {
    0.5
}

fn default_mc_shots() -> u64 {
    1000
}

fn default_mc_estimates() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapsConfig {
    pub generator: GeneratorConfig,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_bins() -> usize {
    20
}
