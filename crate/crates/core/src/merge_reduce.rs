//! Insertion-only coreset maintenance by merge and reduce.
//!
//! Raw points collect in a leaf buffer of `leaf_capacity` points. A full leaf
//! becomes a level-1 bucket; whenever a level holds two buckets they are
//! merged, re-partitioned and re-sampled into one bucket a level up. Every
//! reduction runs at `ε / (2 log₂ n_max)` and `δ / n_max`.

use std::cell::OnceCell;

use serde::{Deserialize, Serialize};

use crate::coreset::{
    build_partition, default_s_cc, eps_sample_size, unified_sample, CoresetParams, CoresetWithPartition,
};
use crate::error::{Error, Result};
use crate::metric::{DistanceMode, Point, WeightedPoint};
use crate::scalar::Scalar;
use crate::util::mix_seed;

pub const MAX_DEFAULT_LEAF: u64 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeReduceConfig {
    pub k: usize,
    pub mode: DistanceMode,
    pub coreset: CoresetParams,
    pub n_max: u64,
    pub leaf_capacity: Option<usize>,
    pub seed: u64,
}

impl MergeReduceConfig {
    pub fn new(k: usize, mode: DistanceMode, coreset: CoresetParams, n_max: u64) -> Self {
        Self {
            k,
            mode,
            coreset,
            n_max,
            leaf_capacity: None,
            seed: 0,
        }
    }

    pub fn with_leaf_capacity(mut self, cap: usize) -> Self {
        self.leaf_capacity = Some(cap);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// `ε / (2 log₂ n_max)`, with the logarithm floored at 1.
    pub fn level_eps(&self) -> f64 {
        self.coreset.eps / (2.0 * (self.n_max as f64).log2().max(1.0))
    }

    pub fn level_delta(&self) -> f64 {
        self.coreset.delta / self.n_max as f64
    }

    /// `⌈log₂ n_max⌉`, the number of levels the ladder may use.
    pub fn max_levels(&self) -> u32 {
        (self.n_max as f64).log2().ceil().max(1.0) as u32
    }

    /// `max(2k + 2, min(ε-sample size for boxes in dimension d, 64))`.
    pub fn default_leaf_capacity(&self, d: usize) -> Result<usize> {
        let s = eps_sample_size(2.0 * d as f64, self.level_eps(), self.level_delta(), MAX_DEFAULT_LEAF)?;
        Ok((2 * self.k + 2).max(s as usize))
    }
}

#[derive(Clone, Debug)]
pub struct MergeReduce<T> {
    config: MergeReduceConfig,
    leaf_capacity: Option<usize>,
    dim: Option<usize>,
    inserted: u64,
    reductions: u64,
    leaf: Vec<Point<T>>,
    /// `levels[i]` holds the (at most two) buckets of level `i + 1`.
    levels: Vec<Vec<CoresetWithPartition<T>>>,
    leaf_coreset: OnceCell<CoresetWithPartition<T>>,
}

impl<T: Scalar> MergeReduce<T> {
    pub fn new(config: MergeReduceConfig) -> Result<Self> {
        if config.k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if config.n_max == 0 {
            return Err(Error::InvalidParameter("n_max must be positive".into()));
        }
        if matches!(config.leaf_capacity, Some(0)) {
            return Err(Error::InvalidParameter("leaf capacity must be positive".into()));
        }
        // surfaces eps/delta range errors at construction
        eps_sample_size(1.0, config.level_eps(), config.level_delta(), 1)?;
        Ok(Self {
            config,
            leaf_capacity: config.leaf_capacity,
            dim: None,
            inserted: 0,
            reductions: 0,
            leaf: Vec::new(),
            levels: Vec::new(),
            leaf_coreset: OnceCell::new(),
        })
    }

    pub fn config(&self) -> &MergeReduceConfig {
        &self.config
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn reductions(&self) -> u64 {
        self.reductions
    }

    pub fn leaf_capacity(&self) -> Option<usize> {
        self.leaf_capacity
    }

    pub fn leaf_len(&self) -> usize {
        self.leaf.len()
    }

    /// Occupied buckets as `(level, bucket)`, highest level first.
    pub fn buckets(&self) -> impl Iterator<Item = (u32, &CoresetWithPartition<T>)> {
        self.levels
            .iter()
            .enumerate()
            .rev()
            .flat_map(|(l, b)| b.iter().map(move |c| (l as u32 + 1, c)))
    }

    pub fn bucket_count(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn insert(&mut self, p: &Point<T>) -> Result<()> {
        if self.inserted >= self.config.n_max {
            return Err(Error::CapacityExceeded(self.config.n_max));
        }
        match self.dim {
            Some(d) if d != p.dim() => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: p.dim(),
                })
            }
            None => {
                self.dim = Some(p.dim());
                if self.leaf_capacity.is_none() {
                    self.leaf_capacity = Some(self.config.default_leaf_capacity(p.dim())?);
                }
            }
            _ => {}
        }
        self.inserted += 1;
        self.leaf.push(p.clone());
        self.leaf_coreset = OnceCell::new();
        if self.leaf.len() < self.leaf_capacity.expect("set on first insert") {
            return Ok(());
        }
        let raw: Vec<WeightedPoint<T>> = self.leaf.drain(..).map(WeightedPoint::unit).collect();
        let mut carry = self.reduce(&raw, 0)?;
        let mut level = 0;
        loop {
            if self.levels.len() <= level {
                self.levels.push(Vec::new());
            }
            self.levels[level].push(carry);
            if self.levels[level].len() < 2 {
                break;
            }
            let merged: Vec<WeightedPoint<T>> = self.levels[level]
                .drain(..)
                .flat_map(|b| b.points.into_iter().map(|p| p.point))
                .collect();
            level += 1;
            carry = self.reduce(&merged, level)?;
        }
        Ok(())
    }

    fn reduce(&mut self, points: &[WeightedPoint<T>], level: usize) -> Result<CoresetWithPartition<T>> {
        self.reductions += 1;
        let seed = mix_seed(self.config.seed, mix_seed(level as u64, self.reductions));
        sample_level(&self.config, points, seed)
    }

    /// Union of every bucket plus the leaf buffer. Region ids run from the
    /// top bucket down to the leaf.
    pub fn coreset(&self) -> Result<CoresetWithPartition<T>> {
        if self.inserted == 0 {
            return Err(Error::EmptyState);
        }
        let mut parts: Vec<CoresetWithPartition<T>> = self.buckets().map(|(_, b)| b.clone()).collect();
        if !self.leaf.is_empty() {
            parts.push(self.leaf_coreset()?.clone());
        }
        Ok(CoresetWithPartition::union(parts).expect("at least one part"))
    }

    fn leaf_coreset(&self) -> Result<&CoresetWithPartition<T>> {
        if let Some(c) = self.leaf_coreset.get() {
            return Ok(c);
        }
        let raw: Vec<WeightedPoint<T>> = self.leaf.iter().cloned().map(WeightedPoint::unit).collect();
        let c = sample_level(&self.config, &raw, mix_seed(self.config.seed, !self.inserted))?;
        Ok(self.leaf_coreset.get_or_init(|| c))
    }
}

fn sample_level<T: Scalar>(
    config: &MergeReduceConfig,
    points: &[WeightedPoint<T>],
    seed: u64,
) -> Result<CoresetWithPartition<T>> {
    let params = config
        .coreset
        .with_eps_delta(config.level_eps(), config.level_delta());
    let parts = build_partition(points, config.k, &params, config.mode, seed)?;
    let d = parts.partition.centers.dim();
    let n: f64 = points.iter().map(|p| p.weight.as_f64()).sum();
    let mut out = unified_sample(
        points,
        parts,
        config.k,
        &params,
        |r| default_s_cc(&params, d, config.k, n, r),
        mix_seed(seed, 1),
    )?;
    out.eps = config.coreset.eps;
    Ok(out)
}
