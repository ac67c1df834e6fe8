//! Sliding-window k-median / k-means over suffix summaries.
//!
//! The structure keeps a sequence of start indices `X_1 < ... < X_T = N`, one
//! running summarizer per index, and a table of frozen snapshots
//! `B(X_i, X_j)` of the summarizer started at `X_i` taken at time `X_j`.
//! After every arrival, [`SwMedian::update`] marks the indices worth keeping,
//! using the cost-ratio test `β R(X_i, N) <= γ R(X_j, N)` and the
//! per-cluster cardinality test, and drops everything else.
//!
//! Snapshots are inclusive: `B(X_i, X_j)` summarizes arrivals `X_i..=X_j`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{merge_coincident, nearest_of, CenterSet, DistanceMode, Point, WeightedPoint};
use crate::offline::{facility_counts, local_search_kmedian};
use crate::pls::{summary_kcenters, PlsParams, PlsState, Summary};
use crate::scalar::Scalar;
use crate::util::mix_seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwMedianConfig {
    pub window: u64,
    pub k: usize,
    pub mode: DistanceMode,
    pub beta: f64,
    pub gamma: f64,
    pub seed: u64,
    pub pls: PlsParams,
}

impl SwMedianConfig {
    pub fn new(window: u64, k: usize, mode: DistanceMode) -> Self {
        Self {
            window,
            k,
            mode,
            beta: 2.0,
            gamma: 8.0,
            seed: 0,
            pls: PlsParams::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_beta_gamma(mut self, beta: f64, gamma: f64) -> Self {
        self.beta = beta;
        self.gamma = gamma;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::InvalidParameter("window must be positive".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if !(self.beta > 1.0 && self.gamma > 1.0) {
            return Err(Error::InvalidParameter("beta and gamma must exceed 1".into()));
        }
        Ok(())
    }

    /// `β (1 + λ + βγλ)`, the approximation factor guaranteed for the window.
    pub fn approximation_factor(&self) -> f64 {
        let l = self.mode.lambda();
        self.beta * (1.0 + l + self.beta * self.gamma * l)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndexEntry<T> {
    pub arrival: u64,
    pub pls: PlsState<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryResult<T> {
    pub centers: CenterSet<T>,
    /// `R(X_1, N)` plus the cost of the summary's facilities to the centers,
    /// after expired facilities are folded into live ones.
    pub cost_estimate: T,
    /// `X_1`, the first arrival covered by the answer.
    pub covered_from: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwMedian<T> {
    config: SwMedianConfig,
    dim: Option<usize>,
    now: u64,
    indices: Vec<IndexEntry<T>>,
    buckets: BTreeMap<(u64, u64), Summary<T>>,
}

impl<T: Scalar> SwMedian<T> {
    pub fn new(config: SwMedianConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            dim: None,
            now: 0,
            indices: Vec::new(),
            buckets: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &SwMedianConfig {
        &self.config
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    /// Live indices `X_1..X_T`.
    pub fn indices(&self) -> Vec<u64> {
        self.indices.iter().map(|e| e.arrival).collect()
    }

    pub fn index_count(&self) -> usize {
        self.indices.len()
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }

    pub fn bucket(&self, from: u64, to: u64) -> Option<&Summary<T>> {
        self.buckets.get(&(from, to))
    }

    pub fn buckets(&self) -> &BTreeMap<(u64, u64), Summary<T>> {
        &self.buckets
    }

    pub fn window_start(&self) -> u64 {
        (self.now + 1).saturating_sub(self.config.window).max(1)
    }

    /// Feeds `p` and then prunes the index sequence.
    pub fn insert(&mut self, p: &Point<T>) -> Result<()> {
        self.store(p)?;
        self.update()
    }

    /// Feeds `p` to every running instance, starts the instance at `p`, and
    /// stores `B(X_i, N)` for every index. Does not prune.
    pub fn store(&mut self, p: &Point<T>) -> Result<()> {
        if p.arrival != self.now + 1 {
            return Err(Error::OutOfOrder {
                expected: self.now + 1,
                found: p.arrival,
            });
        }
        match self.dim {
            Some(d) if d != p.dim() => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: p.dim(),
                })
            }
            None => self.dim = Some(p.dim()),
            _ => {}
        }
        let c = &self.config;
        let fresh = PlsState::new(c.k, c.mode, mix_seed(c.seed, p.arrival), c.pls)?;
        self.indices.push(IndexEntry {
            arrival: p.arrival,
            pls: fresh,
        });
        for e in &mut self.indices {
            e.pls.insert(p)?;
        }
        self.now = p.arrival;
        for e in &self.indices {
            self.buckets.insert((e.arrival, self.now), e.pls.snapshot());
        }
        Ok(())
    }

    fn r(&self, x: u64) -> f64 {
        self.buckets[&(x, self.now)].cost_estimate.as_f64()
    }

    /// Marks indices to keep and deletes the rest along with their buckets.
    pub fn update(&mut self) -> Result<()> {
        let t = self.indices.len();
        if t == 0 {
            return Ok(());
        }
        let xs = self.indices();
        let n = self.now;
        let (k, mode, beta, gamma) = (self.config.k, self.config.mode, self.config.beta, self.config.gamma);
        let mut marked = vec![false; t];

        let mut i = if t >= 2 && (xs[1] as i64) <= n as i64 - self.config.window as i64 {
            1
        } else {
            0
        };
        while i < t {
            if i == t - 1 {
                marked[i] = true;
                break;
            }
            let ri = self.r(xs[i]);
            let j = (i + 1..t)
                .rev()
                .find(|&jp| beta * ri <= gamma * self.r(xs[jp]))
                .unwrap_or(i + 1);
            let sij = &self.buckets[&(xs[i], xs[j])];
            if merge_coincident(&sij.facilities).len() < k {
                marked[i] = true;
            } else {
                let seed = mix_seed(mix_seed(self.config.seed, n), xs[i]);
                let centers = local_search_kmedian(&sij.facilities, k, mode, seed)?;
                while i < j {
                    marked[i] = true;
                    i = (i + 1..=j)
                        .rev()
                        .find(|&l| self.balanced(xs[i], xs[l], &centers))
                        .unwrap_or(i + 1);
                }
            }
            marked[j] = true;
            i = j + 1;
        }

        let keep: Vec<u64> = xs
            .iter()
            .zip(&marked)
            .filter_map(|(&x, &m)| m.then_some(x))
            .collect();
        self.indices.retain(|e| keep.binary_search(&e.arrival).is_ok());
        self.buckets
            .retain(|&(a, b), _| keep.binary_search(&a).is_ok() && keep.binary_search(&b).is_ok());
        Ok(())
    }

    /// Cardinality test between prefix `S(a, l)` and suffix `S(l, N)`.
    fn balanced(&self, a: u64, l: u64, centers: &CenterSet<T>) -> bool {
        let mode = self.config.mode;
        let pre = facility_counts(&self.buckets[&(a, l)].facilities, centers, mode);
        let suf = facility_counts(&self.buckets[&(l, self.now)].facilities, centers, mode);
        pre.iter().zip(&suf).all(|(p, s)| p <= s)
    }

    /// Centers and cost estimate from `B(X_1, N)`.
    pub fn query(&self) -> Result<QueryResult<T>> {
        let first = self.indices.first().ok_or(Error::EmptyState)?.arrival;
        let summary = self.live_summary(&self.buckets[&(first, self.now)])?;
        let (centers, cost_estimate) =
            summary_kcenters(&summary, self.config.k, self.config.mode, mix_seed(self.config.seed, !self.now))?;
        Ok(QueryResult {
            centers,
            cost_estimate,
            covered_from: first,
        })
    }

    /// `summary` with the weight of every expired facility moved onto the
    /// nearest window point among the facilities of the suffix summaries
    /// `B(X_i, N)`, so that the answer only uses window points. The moved mass
    /// is charged to `R` at `λ` times its distance.
    fn live_summary(&self, summary: &Summary<T>) -> Result<Summary<T>> {
        let start = self.window_start();
        let (live, expired): (Vec<_>, Vec<_>) =
            summary.facilities.iter().cloned().partition(|f| f.point.arrival >= start);
        if expired.is_empty() {
            return Ok(summary.clone());
        }
        let mut candidates: BTreeMap<u64, WeightedPoint<T>> =
            live.into_iter().map(|f| (f.point.arrival, f)).collect();
        for e in &self.indices {
            for f in &self.buckets[&(e.arrival, self.now)].facilities {
                if f.point.arrival >= start {
                    candidates.entry(f.point.arrival).or_insert_with(|| WeightedPoint {
                        point: f.point.clone(),
                        weight: T::zero(),
                    });
                }
            }
        }
        let mut live: Vec<WeightedPoint<T>> = candidates.into_values().collect();
        let mode = self.config.mode;
        let mut moved = T::zero();
        for f in &expired {
            let (i, d) = nearest_of(live.iter().map(|l| l.coords()), f.coords(), mode).ok_or(Error::EmptyState)?;
            live[i].weight = live[i].weight + f.weight;
            moved = moved + f.weight * d;
        }
        live.retain(|f| f.weight > T::zero());
        Ok(Summary {
            facilities: live,
            cost_estimate: summary.cost_estimate + T::of(mode.lambda()) * moved,
            ..summary.clone()
        })
    }

    /// `X_1 <= N - W + 1 <= X_2` once the window is full.
    pub fn sandwich_holds(&self) -> bool {
        if self.now < self.config.window {
            return true;
        }
        let start = self.window_start();
        let xs = self.indices();
        xs.first().is_none_or(|&x| x <= start) && xs.get(1).is_none_or(|&x| x >= start)
    }
}
