//! Insertion-only streaming summarizer built on Meyerson online facility
//! location with phased restarts.
//!
//! Each phase runs online facility location with facility cost
//! `f = L / (k (1 + log2(n + 2)))`. Once the phase's total cost (service plus
//! opening) exceeds `c_phase * L`, the lower bound `L` doubles and the current
//! weighted facilities are re-fed, in random order, through a fresh instance.
//!
//! The cost estimate `R` is an upper bound on `COST(P, S)`: every facility
//! carries the accumulated service cost of the points it represents, and a
//! merge of facility `s` into `s'` charges `λ (served_s + w_s d(s, s'))`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{cost, nearest_of, CenterSet, DistanceMode, Point, WeightedPoint};
use crate::offline::local_search_kmedian;
use crate::scalar::Scalar;

pub const SUMMARY_FORMAT_VERSION: u32 = 1;

/// Immutable output of the summarizer: weighted facility set `S` and cost
/// estimate `R`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary<T> {
    pub facilities: Vec<WeightedPoint<T>>,
    /// `R`, an upper bound on the cost of serving every seen point by `S`.
    pub cost_estimate: T,
    pub n_seen: u64,
    pub phase: u32,
    pub facility_cost: T,
}

#[derive(Serialize, Deserialize)]
struct SummaryEnvelope<T> {
    version: u32,
    summary: Summary<T>,
}

impl<T: Scalar> Summary<T> {
    pub fn empty() -> Self {
        Self {
            facilities: Vec::new(),
            cost_estimate: T::zero(),
            n_seen: 0,
            phase: 0,
            facility_cost: T::zero(),
        }
    }

    pub fn total_weight(&self) -> T {
        self.facilities.iter().map(|f| f.weight).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&SummaryEnvelope {
            version: SUMMARY_FORMAT_VERSION,
            summary: self.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let env: SummaryEnvelope<T> = serde_json::from_str(s)?;
        if env.version != SUMMARY_FORMAT_VERSION {
            return Err(Error::Serde(format!("unsupported summary version {}", env.version)));
        }
        Ok(env.summary)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlsParams {
    /// Phase budget multiplier on the lower bound `L`.
    pub c_phase: f64,
    /// Approximation constant used only for reporting and assertions.
    pub alpha: f64,
    /// Soft facility-count constant: `|S| <= c_pls k log2(n + 2)^2`.
    pub c_pls: f64,
}

impl Default for PlsParams {
    fn default() -> Self {
        Self {
            c_phase: 4.0,
            alpha: 64.0,
            c_pls: 4.0,
        }
    }
}

impl PlsParams {
    pub fn size_bound(&self, k: usize, n_seen: u64) -> f64 {
        let l = ((n_seen + 2) as f64).log2();
        self.c_pls * k as f64 * l * l
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Facility<T> {
    site: WeightedPoint<T>,
    /// Accumulated service cost of the points this facility represents.
    served: T,
}

/// Running summarizer instance.
#[derive(Clone, Debug, PartialEq)]
pub struct PlsState<T> {
    k: usize,
    mode: DistanceMode,
    params: PlsParams,
    rng: ChaCha8Rng,
    facilities: Vec<Facility<T>>,
    phase_cost: T,
    lower_bound: Option<T>,
    facility_cost: T,
    phase: u32,
    n_seen: u64,
    dim: Option<usize>,
}

impl<T: Scalar> PlsState<T> {
    pub fn new(k: usize, mode: DistanceMode, seed: u64, params: PlsParams) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if !(params.c_phase > 1.0) {
            return Err(Error::InvalidParameter("c_phase must exceed 1".into()));
        }
        Ok(Self {
            k,
            mode,
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            facilities: Vec::new(),
            phase_cost: T::zero(),
            lower_bound: None,
            facility_cost: T::zero(),
            phase: 0,
            n_seen: 0,
            dim: None,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn mode(&self) -> DistanceMode {
        self.mode
    }

    pub fn n_seen(&self) -> u64 {
        self.n_seen
    }

    pub fn phase(&self) -> u32 {
        self.phase
    }

    pub fn lower_bound(&self) -> Option<T> {
        self.lower_bound
    }

    pub fn num_facilities(&self) -> usize {
        self.facilities.len()
    }

    pub fn cost_estimate(&self) -> T {
        self.facilities.iter().map(|f| f.served).sum()
    }

    fn facility_cost_for(&self, lb: T) -> T {
        let log_n = ((self.n_seen + 2) as f64).log2();
        lb / T::of(self.k as f64 * (1.0 + log_n))
    }

    fn nearest(&self, coords: &[T]) -> Option<(usize, T)> {
        nearest_of(self.facilities.iter().map(|f| f.site.coords()), coords, self.mode)
    }

    pub fn insert(&mut self, p: &Point<T>) -> Result<()> {
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
        self.n_seen += 1;
        let site = WeightedPoint::unit(p.clone());
        let Some((idx, d)) = self.nearest(&p.coords) else {
            self.open(site, T::zero());
            return Ok(());
        };
        if self.lower_bound.is_none() {
            if d <= T::zero() {
                self.facilities[idx].site.weight = self.facilities[idx].site.weight + T::one();
                return Ok(());
            }
            self.lower_bound = Some(d);
            self.facility_cost = self.facility_cost_for(d);
        }
        self.serve(site, T::zero(), idx, d);
        let lb = self.lower_bound.expect("set above");
        if self.phase_cost > T::of(self.params.c_phase) * lb {
            self.advance_phase();
        }
        Ok(())
    }

    fn open(&mut self, site: WeightedPoint<T>, served: T) {
        self.phase_cost = self.phase_cost + self.facility_cost;
        self.facilities.push(Facility { site, served });
    }

    /// Meyerson step: open at `site` with probability `min(1, w d / f)`,
    /// otherwise merge into facility `idx`.
    fn serve(&mut self, site: WeightedPoint<T>, served: T, idx: usize, d: T) -> T {
        let f = self.facility_cost;
        let prob = if f > T::zero() {
            (site.weight * d / f).as_f64().min(1.0)
        } else {
            1.0
        };
        if d > T::zero() && self.rng.random::<f64>() < prob {
            self.open(site, served);
            T::zero()
        } else {
            let charge = site.weight * d;
            let lambda = T::of(self.mode.lambda());
            let target = &mut self.facilities[idx];
            target.site.weight = target.site.weight + site.weight;
            target.served = if d > T::zero() {
                target.served + lambda * (served + charge)
            } else {
                target.served + served
            };
            self.phase_cost = self.phase_cost + charge;
            charge
        }
    }

    fn advance_phase(&mut self) {
        loop {
            let lb = self.lower_bound.expect("phases start after L is known") * T::of(2.0);
            self.lower_bound = Some(lb);
            self.phase += 1;
            self.facility_cost = self.facility_cost_for(lb);
            self.phase_cost = T::zero();
            let mut old = std::mem::take(&mut self.facilities);
            old.shuffle(&mut self.rng);
            for fac in old {
                match self.nearest(fac.site.coords()) {
                    None => self.open(fac.site, fac.served),
                    Some((idx, d)) => {
                        self.serve(fac.site, fac.served, idx, d);
                    }
                }
            }
            if self.phase_cost <= T::of(self.params.c_phase) * lb {
                break;
            }
        }
    }

    /// Immutable copy of `(S, R, n_seen)`.
    pub fn snapshot(&self) -> Summary<T> {
        Summary {
            facilities: self.facilities.iter().map(|f| f.site.clone()).collect(),
            cost_estimate: self.cost_estimate(),
            n_seen: self.n_seen,
            phase: self.phase,
            facility_cost: self.facility_cost,
        }
    }
}

/// Offline k-median over the summary's weighted facilities.
///
/// Returns the centers and `R + COST(S, centers)`.
pub fn summary_kcenters<T: Scalar>(
    summary: &Summary<T>,
    k: usize,
    mode: DistanceMode,
    seed: u64,
) -> Result<(CenterSet<T>, T)> {
    if summary.facilities.is_empty() {
        return Err(Error::EmptyState);
    }
    let centers = local_search_kmedian(&summary.facilities, k, mode, seed)?;
    let extra = cost(&summary.facilities, &centers, mode)?;
    Ok((centers, summary.cost_estimate + extra))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::offline::brute_force_opt;
    use proptest::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn state(k: usize, mode: DistanceMode, seed: u64) -> PlsState<f64> {
        PlsState::new(k, mode, seed, PlsParams::default()).unwrap()
    }

    fn stream(coords: &[Vec<f64>]) -> Vec<Point<f64>> {
        coords
            .iter()
            .enumerate()
            .map(|(i, c)| Point::new(i as u64 + 1, c.clone(), i as u64 + 1))
            .collect()
    }

    fn gaussians(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                let m = if i % 2 == 0 { 0.0 } else { 50.0 };
                let u: f64 = rng.random::<f64>() + rng.random::<f64>() + rng.random::<f64>() - 1.5;
                let v: f64 = rng.random::<f64>() + rng.random::<f64>() + rng.random::<f64>() - 1.5;
                vec![m + u, v]
            })
            .collect()
    }

    #[test]
    fn new_state() {
        let s = state(2, DistanceMode::Euclidean, 7);
        let snap = s.snapshot();
        assert_eq!(snap.n_seen, 0);
        assert!(snap.facilities.is_empty());
        assert_eq!(snap.cost_estimate, 0.0);
        assert_eq!(snap.phase, 0);
        assert_eq!(s, state(2, DistanceMode::Euclidean, 7));
        assert!(PlsState::<f64>::new(0, DistanceMode::Euclidean, 7, PlsParams::default()).is_err());
    }

    #[test]
    fn first_insertion_opens() {
        let mut s = state(2, DistanceMode::Euclidean, 1);
        s.insert(&Point::new(1, vec![3.0, 4.0], 1)).unwrap();
        let snap = s.snapshot();
        assert_eq!(snap.facilities.len(), 1);
        assert_eq!(snap.facilities[0].weight, 1.0);
        assert_eq!(snap.cost_estimate, 0.0);
    }

    #[test]
    fn repeated_point_collapses() {
        let mut s = state(3, DistanceMode::SquaredEuclidean, 1);
        for i in 0..25 {
            s.insert(&Point::new(i, vec![1.0, -2.0], i + 1)).unwrap();
        }
        let snap = s.snapshot();
        assert_eq!(snap.facilities.len(), 1);
        assert_eq!(snap.facilities[0].weight, 25.0);
        assert_eq!(snap.cost_estimate, 0.0);
    }

    #[test]
    fn dimension_checked() {
        let mut s = state(1, DistanceMode::Euclidean, 1);
        s.insert(&Point::new(1, vec![0.0], 1)).unwrap();
        assert!(s.insert(&Point::new(2, vec![0.0, 1.0], 2)).is_err());
    }

    #[test]
    fn cost_estimate_bounds_true_cost_and_opt() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut worst: f64 = 0.0;
        for trial in 0..40 {
            let pts = stream(&gaussians(&mut rng, 20));
            for mode in [DistanceMode::Euclidean, DistanceMode::SquaredEuclidean] {
                let mut s = state(2, mode, trial);
                for p in &pts {
                    s.insert(p).unwrap();
                    let snap = s.snapshot();
                    let fac = CenterSet::new(
                        snap.facilities.iter().map(|f| f.coords().to_vec()).collect(),
                    )
                    .unwrap();
                    let raw: Vec<_> = pts[..snap.n_seen as usize]
                        .iter()
                        .cloned()
                        .map(WeightedPoint::unit)
                        .collect();
                    let served = cost(&raw, &fac, mode).unwrap();
                    assert!(served <= snap.cost_estimate * (1.0 + 1e-9) + 1e-12);
                }
                let w: Vec<_> = pts.iter().cloned().map(WeightedPoint::unit).collect();
                let opt = brute_force_opt(&w, 2, mode).unwrap().1;
                let ratio = s.cost_estimate() / opt;
                worst = worst.max(ratio);
                assert!(ratio <= PlsParams::default().alpha, "ratio {ratio}");
            }
        }
        assert!(worst.is_finite());
    }

    #[test]
    fn hundred_point_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = stream(&gaussians(&mut rng, 100));
        let mut s = state(2, DistanceMode::Euclidean, 5);
        for p in &pts {
            s.insert(p).unwrap();
        }
        let w: Vec<_> = pts.iter().cloned().map(WeightedPoint::unit).collect();
        // local search upper-bounds OPT, every 20-point subsample lower-bounds it
        let ls = local_search_kmedian(&w, 2, DistanceMode::Euclidean, 0).unwrap();
        let ls_cost = cost(&w, &ls, DistanceMode::Euclidean).unwrap();
        let mut lower = 0.0;
        for chunk in w.chunks(20) {
            lower += brute_force_opt(chunk, 2, DistanceMode::Euclidean).unwrap().1;
        }
        assert!(lower <= ls_cost);
        let alpha_obs = s.cost_estimate() / lower;
        assert!(alpha_obs <= 64.0, "alpha_obs {alpha_obs}");
        let bound = PlsParams::default().size_bound(2, 100);
        assert!((s.num_facilities() as f64) <= bound);
    }

    #[test]
    fn snapshot_isolation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = stream(&gaussians(&mut rng, 40));
        let mut s = state(2, DistanceMode::Euclidean, 3);
        for p in &pts[..30] {
            s.insert(p).unwrap();
        }
        let snap = s.snapshot();
        let bytes = snap.to_json().unwrap();
        let deep = Summary::<f64>::from_json(&bytes).unwrap();
        assert_eq!(deep, snap);
        for p in &pts[30..] {
            s.insert(p).unwrap();
        }
        assert_eq!(snap.to_json().unwrap(), bytes);
        assert_eq!(snap.n_seen, 30);
        assert_eq!(Summary::<f64>::empty().cost_estimate, 0.0);
    }

    #[test]
    fn kcenters_examples() {
        let mut s = state(2, DistanceMode::Euclidean, 0);
        for i in 0..30u64 {
            let c = if i % 2 == 0 { vec![0.0, 0.0] } else { vec![9.0, 9.0] };
            s.insert(&Point::new(i, c, i + 1)).unwrap();
        }
        let snap = s.snapshot();
        assert_eq!(snap.facilities.len(), 2);
        let (centers, est) = summary_kcenters(&snap, 2, DistanceMode::Euclidean, 0).unwrap();
        assert_eq!(centers.len(), 2);
        assert_eq!(est, 0.0);
        assert_eq!(summary_kcenters(&Summary::<f64>::empty(), 2, DistanceMode::Euclidean, 0).unwrap_err(), Error::EmptyState);
    }

    #[test]
    fn kcenters_random_stream_quality() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let coords: Vec<Vec<f64>> = (0..60).map(|_| vec![rng.random(), rng.random()]).collect();
        let pts = stream(&coords);
        let mut s = state(3, DistanceMode::Euclidean, 61);
        for p in &pts {
            s.insert(p).unwrap();
        }
        let (centers, est) = summary_kcenters(&s.snapshot(), 3, DistanceMode::Euclidean, 1).unwrap();
        let w: Vec<_> = pts.iter().cloned().map(WeightedPoint::unit).collect();
        let got = cost(&w, &centers, DistanceMode::Euclidean).unwrap();
        let lower: f64 = w
            .chunks(20)
            .map(|c| brute_force_opt(c, 3, DistanceMode::Euclidean).unwrap().1)
            .sum();
        assert!(got <= 64.0 * lower);
        assert!(est >= 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn weight_conservation_and_monotone_phase(
            seed in 0u64..1000,
            coords in prop::collection::vec(prop::collection::vec(-20.0f64..20.0, 2), 1..150),
            k in 1usize..4,
            squared in any::<bool>(),
        ) {
            let mode = if squared { DistanceMode::SquaredEuclidean } else { DistanceMode::Euclidean };
            let mut s = state(k, mode, seed);
            let (mut phase, mut lb, mut r) = (0u32, 0.0f64, 0.0f64);
            for (i, c) in coords.iter().enumerate() {
                s.insert(&Point::new(i as u64, c.clone(), i as u64 + 1)).unwrap();
                let snap = s.snapshot();
                prop_assert_eq!(snap.total_weight(), snap.n_seen as f64);
                prop_assert!(snap.phase >= phase);
                let now_lb = s.lower_bound().unwrap_or(0.0);
                prop_assert!(now_lb >= lb);
                prop_assert!(snap.cost_estimate >= r * (1.0 - 1e-12), "{} < {}", snap.cost_estimate, r);
                phase = snap.phase;
                lb = now_lb;
                r = snap.cost_estimate;
            }
        }
    }
}
