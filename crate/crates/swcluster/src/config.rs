use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use swcluster_core::{DistanceMode, Technique};

/// Brute-force oracle limits: windows above this size are never solved exactly.
pub const ORACLE_MAX_WINDOW: u64 = 16;
pub const ORACLE_MAX_K: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    Kmedian,
    Coreset,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// Uniform in `[0, 1]^d`.
    UniformBox,
    /// Component `i mod m`, means spaced on a circle of radius 10.
    GaussianMixture { m: usize, spread: f64 },
    /// As the mixture, with means moving `spread` along the first axis every
    /// `period` points.
    Drift { m: usize, period: u64, spread: f64 },
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ExperimentConfig {
    pub pipeline: Pipeline,
    pub generator: Generator,
    pub n: u64,
    pub d: usize,
    pub window: u64,
    pub k: usize,
    pub mode: DistanceMode,
    pub eps: f64,
    pub delta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub seed: u64,
    /// Exact comparison every this many steps; 0 disables it.
    pub oracle_every: u64,
    pub technique: Technique,
    pub leaf_capacity: Option<usize>,
    /// Random center sets per coreset error evaluation.
    pub center_sets: usize,
    /// k-means ratios are only hard-failed when the window's σ² is at most this.
    pub sigma_threshold: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            pipeline: Pipeline::Kmedian,
            generator: Generator::UniformBox,
            n: 200,
            d: 2,
            window: 12,
            k: 2,
            mode: DistanceMode::Euclidean,
            eps: 0.4,
            delta: 0.1,
            beta: 2.0,
            gamma: 8.0,
            seed: 1,
            oracle_every: 10,
            technique: Technique::Hpm,
            leaf_capacity: None,
            center_sets: 20,
            sigma_threshold: 0.5,
        }
    }
}

impl ExperimentConfig {
    /// Whether the brute-force window oracle runs for this configuration.
    pub fn exact_oracle(&self) -> bool {
        self.oracle_every > 0 && self.window <= ORACLE_MAX_WINDOW && self.k <= ORACLE_MAX_K
    }

    /// Ratio cap for the distance mode.
    pub fn ratio_cap(&self) -> f64 {
        match self.mode {
            DistanceMode::Euclidean => 40.0,
            DistanceMode::SquaredEuclidean => 160.0,
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        anyhow::ensure!(self.n > 0, "n must be positive");
        anyhow::ensure!(self.d > 0, "d must be positive");
        anyhow::ensure!(self.window > 0, "window must be positive");
        anyhow::ensure!(self.k > 0, "k must be positive");
        anyhow::ensure!(self.eps > 0.0 && self.eps < 1.0, "eps must lie in (0, 1)");
        anyhow::ensure!(self.delta > 0.0 && self.delta < 1.0, "delta must lie in (0, 1)");
        match &self.generator {
            Generator::GaussianMixture { m, spread } | Generator::Drift { m, spread, .. } => {
                anyhow::ensure!(*m > 0, "mixture needs at least one component");
                anyhow::ensure!(*spread >= 0.0, "spread must be nonnegative");
            }
            _ => {}
        }
        if let Generator::Drift { period, .. } = self.generator {
            anyhow::ensure!(period > 0, "drift period must be positive");
        }
        Ok(())
    }
}
