//! Sliding-window coresets over a pruned sequence of merge-and-reduce states.
//!
//! Index `x_i` owns a [`MergeReduce`] over arrivals `x_i..=N`. After each
//! arrival the sequence is thinned: for each `i` the indices strictly
//! between `x_i` and the greatest `x_j` passing the drop test are deleted.
//! The drop test places the older coreset's points with arrival in
//! `[x_i, x_j]` into the regions of the younger coreset `K_{x_j}` and
//! requires every region `R` to receive at most `ε w_R` of that weight.
//! Indices before the last expired one are then discarded.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::coreset::CoresetWithPartition;
use crate::error::{Error, Result};
use crate::merge_reduce::{MergeReduce, MergeReduceConfig};
use crate::metric::Point;
use crate::scalar::Scalar;
use crate::util::mix_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropRule {
    /// Every region of the younger partition stays within `ε w_R`.
    Universal,
    /// Some region of the younger partition stays within `ε w_R`.
    Existential,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwCoresetConfig {
    pub window: u64,
    pub merge_reduce: MergeReduceConfig,
    pub drop_rule: DropRule,
}

impl SwCoresetConfig {
    pub fn new(window: u64, merge_reduce: MergeReduceConfig) -> Self {
        Self {
            window,
            merge_reduce,
            drop_rule: DropRule::Universal,
        }
    }

    pub fn eps(&self) -> f64 {
        self.merge_reduce.coreset.eps
    }
}

/// Sum of weights of `K`'s points tagged `region` with arrival in `[a, b]`.
pub fn region_interval_weight<T: Scalar>(core: &CoresetWithPartition<T>, region: u64, a: u64, b: u64) -> Result<f64> {
    if core.region(region).is_none() {
        return Err(Error::UnknownRegion(region));
    }
    Ok(core
        .points
        .iter()
        .filter(|q| q.region == region && (a..=b).contains(&q.point.point.arrival))
        .map(|q| q.point.weight.as_f64())
        .sum())
}

/// Weight of `older`'s points with arrival in `[a, b]`, placed into the
/// regions of `younger` (partitions tried in order). Points outside every
/// region are summed under `None`.
pub fn interval_weight_by_region<T: Scalar>(
    older: &CoresetWithPartition<T>,
    younger: &CoresetWithPartition<T>,
    a: u64,
    b: u64,
) -> BTreeMap<Option<u64>, f64> {
    let mut out = BTreeMap::new();
    for q in older.points.iter().filter(|q| (a..=b).contains(&q.point.point.arrival)) {
        let r = younger.partitions.iter().find_map(|p| p.locate(q.point.coords())).map(|r| r.id);
        *out.entry(r).or_insert(0.0) += q.point.weight.as_f64();
    }
    out
}

fn drop_ok<T: Scalar>(
    rule: DropRule,
    eps: f64,
    older: &CoresetWithPartition<T>,
    younger: &CoresetWithPartition<T>,
    a: u64,
    b: u64,
) -> bool {
    let cap: BTreeMap<u64, f64> = younger.regions().map(|r| (r.id, eps * r.count)).collect();
    let mut acc: BTreeMap<u64, f64> = BTreeMap::new();
    for q in older.points.iter().filter(|q| (a..=b).contains(&q.point.point.arrival)) {
        let hit = younger.partitions.iter().find_map(|p| p.locate(q.point.coords()));
        match (hit, rule) {
            (Some(r), _) => {
                let w = acc.entry(r.id).or_insert(0.0);
                *w += q.point.weight.as_f64();
                if rule == DropRule::Universal && *w > cap[&r.id] {
                    return false;
                }
            }
            (None, DropRule::Universal) => return false,
            (None, DropRule::Existential) => {}
        }
    }
    match rule {
        DropRule::Universal => true,
        DropRule::Existential => cap.iter().any(|(id, c)| acc.get(id).copied().unwrap_or(0.0) <= *c),
    }
}

/// One deletion made by the pruning pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prune {
    pub kept_from: u64,
    pub kept_to: u64,
    pub removed: Vec<u64>,
}

#[derive(Clone, Debug)]
struct Index<T> {
    arrival: u64,
    state: MergeReduce<T>,
}

#[derive(Clone, Debug)]
pub struct SwCoreset<T> {
    config: SwCoresetConfig,
    now: u64,
    indices: Vec<Index<T>>,
    last_prunes: Vec<Prune>,
}

impl<T: Scalar> SwCoreset<T> {
    pub fn new(config: SwCoresetConfig) -> Result<Self> {
        if config.window == 0 {
            return Err(Error::InvalidParameter("window must be positive".into()));
        }
        MergeReduce::<T>::new(config.merge_reduce)?;
        Ok(Self {
            config,
            now: 0,
            indices: Vec::new(),
            last_prunes: Vec::new(),
        })
    }

    pub fn config(&self) -> &SwCoresetConfig {
        &self.config
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn indices(&self) -> Vec<u64> {
        self.indices.iter().map(|i| i.arrival).collect()
    }

    pub fn index_count(&self) -> usize {
        self.indices.len()
    }

    pub fn window_start(&self) -> u64 {
        (self.now + 1).saturating_sub(self.config.window).max(1)
    }

    /// Deletions made while handling the latest arrival.
    pub fn last_prunes(&self) -> &[Prune] {
        &self.last_prunes
    }

    /// Coreset of the state started at `arrival`, if that index is live.
    pub fn coreset_at(&self, arrival: u64) -> Option<Result<CoresetWithPartition<T>>> {
        self.indices
            .iter()
            .find(|i| i.arrival == arrival)
            .map(|i| i.state.coreset())
    }

    pub fn insert(&mut self, p: &Point<T>) -> Result<()> {
        if p.arrival != self.now + 1 {
            return Err(Error::OutOfOrder {
                expected: self.now + 1,
                found: p.arrival,
            });
        }
        for idx in &mut self.indices {
            idx.state.insert(p)?;
        }
        let mut cfg = self.config.merge_reduce;
        cfg.seed = mix_seed(cfg.seed, p.arrival);
        let mut fresh = MergeReduce::new(cfg)?;
        fresh.insert(p)?;
        self.indices.push(Index {
            arrival: p.arrival,
            state: fresh,
        });
        self.now = p.arrival;
        self.prune()?;
        self.expire();
        Ok(())
    }

    fn prune(&mut self) -> Result<()> {
        self.last_prunes.clear();
        let (rule, eps) = (self.config.drop_rule, self.config.eps());
        let mut cores: Vec<Option<CoresetWithPartition<T>>> = vec![None; self.indices.len()];
        let mut i = 0;
        while i + 2 < self.indices.len() {
            if cores[i].is_none() {
                cores[i] = Some(self.indices[i].state.coreset()?);
            }
            let mut found = None;
            for j in (i + 2..self.indices.len()).rev() {
                if cores[j].is_none() {
                    cores[j] = Some(self.indices[j].state.coreset()?);
                }
                let (a, b) = (self.indices[i].arrival, self.indices[j].arrival);
                if drop_ok(rule, eps, cores[i].as_ref().unwrap(), cores[j].as_ref().unwrap(), a, b) {
                    found = Some(j);
                    break;
                }
            }
            if let Some(j) = found {
                let removed: Vec<u64> = self.indices.drain(i + 1..j).map(|x| x.arrival).collect();
                cores.drain(i + 1..j);
                self.last_prunes.push(Prune {
                    kept_from: self.indices[i].arrival,
                    kept_to: self.indices[i + 1].arrival,
                    removed,
                });
            }
            i += 1;
        }
        Ok(())
    }

    fn expire(&mut self) {
        let start = self.window_start();
        if let Some(last) = self.indices.iter().rposition(|x| x.arrival < start) {
            self.indices.drain(..last);
        }
    }

    /// The coreset maintained for `x_1`.
    pub fn query(&self) -> Result<CoresetWithPartition<T>> {
        self.indices.first().ok_or(Error::EmptyState)?.state.coreset()
    }

    /// `x_1 <= N - W + 1 <= x_2` once the window is full.
    pub fn sandwich_holds(&self) -> bool {
        if self.now < self.config.window {
            return true;
        }
        let start = self.window_start();
        let xs = self.indices();
        xs.first().is_none_or(|&x| x <= start) && xs.get(1).is_none_or(|&x| x >= start)
    }
}

/// `s ε⁻² log₂ N`, the index-count scale for coreset size `s`.
pub fn index_count_scale(coreset_size: usize, eps: f64, n: u64) -> f64 {
    coreset_size as f64 / (eps * eps) * (n.max(2) as f64).log2()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coreset::{coreset_cost_error, random_centers, CoresetParams, Technique};
    use crate::metric::{DistanceMode, WeightedPoint};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(window: u64, eps: f64, leaf: usize, n_max: u64) -> SwCoresetConfig {
        let mr = MergeReduceConfig::new(2, DistanceMode::Euclidean, CoresetParams::new(Technique::Hpm, eps, 0.1), n_max)
            .with_leaf_capacity(leaf)
            .with_seed(5);
        SwCoresetConfig::new(window, mr)
    }

    #[test]
    fn first_point_and_order() {
        let mut s = SwCoreset::<f64>::new(cfg(10, 0.25, 4, 100)).unwrap();
        assert_eq!(s.query().unwrap_err(), Error::EmptyState);
        s.insert(&Point::new(1, vec![0.0, 0.0], 1)).unwrap();
        assert_eq!(s.indices(), vec![1]);
        assert!(s.insert(&Point::new(5, vec![0.0, 0.0], 5)).is_err());
    }

    #[test]
    fn identical_points() {
        let w = 40;
        let eps = 0.25;
        let mut s = SwCoreset::<f64>::new(cfg(w, eps, 4, 200)).unwrap();
        for n in 1..=3 * w {
            s.insert(&Point::new(n, vec![1.0, 1.0], n)).unwrap();
            assert!(s.sandwich_holds());
            let got = s.query().unwrap().total_weight();
            let window = n.min(w) as f64;
            // every suffix has the same shape, so the only error is the overhang
            assert!(got >= window && got <= window * (1.0 + eps) + 1.0, "N={n} weight {got}");
        }
        // the youngest ~1/ε indices cannot satisfy the test yet; older ones
        // thin out geometrically (every other index at least a (1+ε) step)
        let log_bound = 2.0 * (1.0 + 1.0 / eps) + 2.0 * (w as f64).ln() / (1.0 + eps).ln() + 2.0;
        assert!((s.index_count() as f64) <= log_bound, "{:?}", s.indices());
    }

    #[test]
    fn region_interval_weight_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = SwCoreset::<f64>::new(cfg(50, 0.3, 6, 100)).unwrap();
        for n in 1..=40 {
            s.insert(&Point::new(n, vec![rng.random(), rng.random()], n)).unwrap();
        }
        let k = s.query().unwrap();
        for r in k.regions() {
            let full = region_interval_weight(&k, r.id, 0, u64::MAX).unwrap();
            assert!((full - r.count).abs() < 1e-9);
            assert_eq!(region_interval_weight(&k, r.id, 10, 9).unwrap(), 0.0);
            let scan: f64 = k
                .points
                .iter()
                .filter(|q| q.region == r.id && q.point.point.arrival >= 5 && q.point.point.arrival <= 25)
                .map(|q| q.point.weight)
                .sum();
            assert_eq!(region_interval_weight(&k, r.id, 5, 25).unwrap(), scan);
        }
        assert_eq!(region_interval_weight(&k, 10_000, 0, 1).unwrap_err(), Error::UnknownRegion(10_000));
    }

    #[test]
    fn pruning_safety_and_window_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (w, eps) = (60u64, 0.3);
        let mut s = SwCoreset::<f64>::new(cfg(w, eps, 8, 300)).unwrap();
        let mut raw: Vec<WeightedPoint<f64>> = Vec::new();
        for n in 1..=200u64 {
            let p = Point::new(n, vec![rng.random(), rng.random()], n);
            raw.push(WeightedPoint::unit(p.clone()));
            let before = s.indices();
            s.insert(&p).unwrap();
            assert!(s.sandwich_holds());
            let xs = s.indices();
            assert!(xs.windows(2).all(|v| v[0] < v[1]));
            assert_eq!(*xs.last().unwrap(), n);
            assert!(xs.iter().filter(|&&x| x < s.window_start()).count() <= 1);
            for pr in s.last_prunes() {
                assert!(pr.removed.iter().all(|x| before.contains(x) || *x == n));
                let (Some(older), Some(younger)) = (s.coreset_at(pr.kept_from), s.coreset_at(pr.kept_to)) else {
                    continue; // expired right after pruning
                };
                let (older, younger) = (older.unwrap(), younger.unwrap());
                // independent linear-scan placement into the younger regions
                for r in younger.regions() {
                    let part = younger.partitions.iter().find(|p| p.region(r.id).is_some()).unwrap();
                    let pos = younger.partitions.iter().position(|p| std::ptr::eq(p, part)).unwrap();
                    let moved: f64 = older
                        .points
                        .iter()
                        .filter(|q| (pr.kept_from..=pr.kept_to).contains(&q.point.point.arrival))
                        .filter(|q| {
                            let first = younger.partitions.iter().position(|p| p.locate(q.point.coords()).is_some());
                            first == Some(pos) && part.locate(q.point.coords()).map(|x| x.id) == Some(r.id)
                        })
                        .map(|q| q.point.weight)
                        .sum();
                    assert!(moved <= eps * r.count + 1e-9);
                }
            }
            let active = &raw[(s.window_start() - 1) as usize..];
            let k = s.query().unwrap();
            for _ in 0..5 {
                let c = random_centers(active, 2, &mut rng).unwrap();
                let e = coreset_cost_error(active, &k, &c, DistanceMode::Euclidean).unwrap();
                assert!(e <= 3.0 * eps, "N={n} err {e}");
            }
        }
    }

    #[test]
    fn small_window_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = SwCoreset::<f64>::new(cfg(3, 0.3, 8, 100)).unwrap();
        for n in 1..=20 {
            s.insert(&Point::new(n, vec![rng.random(), rng.random()], n)).unwrap();
        }
        let k = s.query().unwrap();
        assert!(k.points.iter().all(|q| q.point.weight == 1.0));
        assert_eq!(s.query().unwrap().to_json().unwrap(), k.to_json().unwrap());
    }

    #[test]
    fn existential_rule_prunes_at_least_as_much() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut a = SwCoreset::<f64>::new(cfg(30, 0.3, 6, 200)).unwrap();
        let mut c = cfg(30, 0.3, 6, 200);
        c.drop_rule = DropRule::Existential;
        let mut b = SwCoreset::<f64>::new(c).unwrap();
        let mut total_a = 0;
        let mut total_b = 0;
        for n in 1..=80 {
            let p = Point::new(n, vec![rng.random(), rng.random()], n);
            a.insert(&p).unwrap();
            b.insert(&p).unwrap();
            total_a += a.index_count();
            total_b += b.index_count();
        }
        assert!(total_b <= total_a);
    }
}
