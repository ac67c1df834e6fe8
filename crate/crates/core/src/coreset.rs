//! Partition-based (k, ε)-coresets in Euclidean space.
//!
//! Both constructions start from an offline solution `C` with cost `COST`
//! and radius unit `r` (mean distance, or root-mean-square distance for the
//! squared objective). Around every center they lay out balls of radius
//! `2^j r`; a point belongs to the ball level of its nearest center.
//!
//! * [`Technique::Hpm`] splits each level into grid cells of side
//!   `ε / (10 √d α_c) · 2^j r`.
//! * [`Technique::Chen`] uses the rings between consecutive balls as regions.
//!
//! [`unified_sample`] then draws a uniform sample from every region and
//! reweights it to the region's total weight.

use std::collections::BTreeMap;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{cost, CenterSet, DistanceMode, Point, WeightedPoint};
use crate::offline::local_search_kmedian;
use crate::scalar::Scalar;
use crate::util::mix_seed;

pub const CORESET_FORMAT_VERSION: u32 = 1;

/// Grids are `ε^{-d}` cells per ball, so the HPM construction stops here.
pub const MAX_GRID_DIM: usize = 4;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Technique {
    Hpm,
    Chen,
}

impl FromStr for Technique {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hpm" | "grid" => Ok(Technique::Hpm),
            "chen" | "ring" => Ok(Technique::Chen),
            other => Err(Error::InvalidParameter(format!("unknown technique {other:?}"))),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoresetParams {
    pub technique: Technique,
    pub eps: f64,
    pub delta: f64,
    /// Constant in front of the ε-sample bound.
    pub c_vc: f64,
    /// Approximation ratio assumed for the offline solution.
    pub alpha_c: f64,
    /// Constant of the ring VC-dimension composition bound.
    pub c_ring: f64,
}

impl CoresetParams {
    pub fn new(technique: Technique, eps: f64, delta: f64) -> Self {
        Self {
            technique,
            eps,
            delta,
            c_vc: 1.0,
            alpha_c: 5.0,
            c_ring: 2.0,
        }
    }

    pub fn with_c_vc(mut self, c_vc: f64) -> Self {
        self.c_vc = c_vc;
        self
    }

    pub fn with_eps_delta(mut self, eps: f64, delta: f64) -> Self {
        self.eps = eps;
        self.delta = delta;
        self
    }

    fn validate(&self) -> Result<()> {
        check_unit("eps", self.eps)?;
        check_unit("delta", self.delta)?;
        if !(self.c_vc > 0.0 && self.alpha_c >= 1.0 && self.c_ring > 0.0) {
            return Err(Error::InvalidParameter("c_vc, alpha_c and c_ring must be positive".into()));
        }
        Ok(())
    }

    /// VC dimension of the region shapes in dimension `d`.
    pub fn vc_dim(&self, d: usize) -> f64 {
        match self.technique {
            Technique::Hpm => 2.0 * d as f64,
            Technique::Chen => {
                let b = (d + 1) as f64;
                self.c_ring * b * (2.0 * b).log2()
            }
        }
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::InvalidParameter(format!("{name} must lie in (0, 1), got {v}")));
    }
    Ok(())
}

/// `min(pop, ceil(c_vc / eps² · (d_vc ln(d_vc / eps) + ln(1 / delta))))`.
pub fn eps_sample_size(d_vc: f64, eps: f64, delta: f64, population: u64) -> Result<u64> {
    eps_sample_size_with(1.0, d_vc, eps, delta, population)
}

pub fn eps_sample_size_with(c_vc: f64, d_vc: f64, eps: f64, delta: f64, population: u64) -> Result<u64> {
    check_unit("eps", eps)?;
    check_unit("delta", delta)?;
    if !(d_vc >= 1.0) || !(c_vc > 0.0) {
        return Err(Error::InvalidParameter("d_vc must be at least 1 and c_vc positive".into()));
    }
    let raw = c_vc / (eps * eps) * (d_vc * (d_vc / eps).ln() + (1.0 / delta).ln());
    let size = raw.ceil();
    Ok(if size >= population as f64 { population } else { size as u64 })
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RegionKind {
    GridCell,
    Ring,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    #[serde(rename = "regionId")]
    pub id: u64,
    pub kind: RegionKind,
    #[serde(rename = "i")]
    pub center_index: usize,
    #[serde(rename = "j")]
    pub level: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<Vec<i64>>,
    /// Total weight represented by the region.
    pub count: f64,
}

type RegionKey = (usize, u32, Vec<i64>);

/// Regions around one set of centers. Ids are unique within the coreset that
/// owns the partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition<T> {
    pub technique: Technique,
    pub mode: DistanceMode,
    pub centers: CenterSet<T>,
    /// The unit `r`; zero when every point sits on a center.
    pub base_radius: T,
    /// Highest ball level `j`.
    pub levels: u32,
    pub eps: f64,
    pub alpha_c: f64,
    pub regions: Vec<Region>,
    #[serde(skip)]
    lookup: BTreeMap<RegionKey, usize>,
}

impl<T: Scalar> Partition<T> {
    fn reindex(&mut self) {
        self.lookup = self
            .regions
            .iter()
            .enumerate()
            .map(|(pos, r)| ((r.center_index, r.level, r.cell.clone().unwrap_or_default()), pos))
            .collect();
    }

    fn cell_side(&self, level: u32) -> T {
        let d = self.centers.dim() as f64;
        T::of(self.eps / (10.0 * d.sqrt() * self.alpha_c) * 2f64.powi(level as i32)) * self.base_radius
    }

    /// Region key of a location, whether or not the region is populated.
    /// `None` past the outermost ball.
    fn key_of(&self, coords: &[T]) -> Option<RegionKey> {
        let (i, d) = self.centers.nearest(coords, self.mode);
        let d = match self.mode {
            DistanceMode::Euclidean => d,
            DistanceMode::SquaredEuclidean => d.sqrt(),
        };
        let r = self.base_radius;
        if r <= T::zero() {
            return (d <= T::zero()).then(|| (i, 0, self.zero_cell()));
        }
        let level = ball_level(d, r)?;
        if level > self.levels {
            return None;
        }
        let cell = match self.technique {
            Technique::Chen => Vec::new(),
            Technique::Hpm => {
                let side = self.cell_side(level);
                coords
                    .iter()
                    .zip(&self.centers.centers()[i])
                    .map(|(&x, &c)| ((x - c) / side).floor().as_f64() as i64)
                    .collect()
            }
        };
        Some((i, level, cell))
    }

    fn zero_cell(&self) -> Vec<i64> {
        match self.technique {
            Technique::Hpm => vec![0; self.centers.dim()],
            Technique::Chen => Vec::new(),
        }
    }

    /// The populated region containing `coords`, if any.
    pub fn locate(&self, coords: &[T]) -> Option<&Region> {
        let key = self.key_of(coords)?;
        self.lookup.get(&key).map(|&pos| &self.regions[pos])
    }

    pub fn region(&self, id: u64) -> Option<&Region> {
        self.regions.iter().find(|r| r.id == id)
    }

    pub fn total_count(&self) -> f64 {
        self.regions.iter().map(|r| r.count).sum()
    }

    fn shift_ids(&mut self, offset: u64) {
        for r in &mut self.regions {
            r.id += offset;
        }
    }
}

/// Smallest `j >= 0` with `d <= 2^j r`.
fn ball_level<T: Scalar>(d: T, r: T) -> Option<u32> {
    let mut radius = r;
    for j in 0..=1024u32 {
        if d <= radius {
            return Some(j);
        }
        radius = radius * T::of(2.0);
        if !radius.is_finite() {
            return None;
        }
    }
    None
}

/// A partition of `points` together with each point's region id.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionedPoints<T> {
    pub partition: Partition<T>,
    pub region_of: Vec<u64>,
}

pub fn hpm_partition<T: Scalar>(
    points: &[WeightedPoint<T>],
    k: usize,
    eps: f64,
    mode: DistanceMode,
    seed: u64,
) -> Result<PartitionedPoints<T>> {
    build_partition(points, k, &CoresetParams::new(Technique::Hpm, eps, 0.5), mode, seed)
}

pub fn chen_partition<T: Scalar>(
    points: &[WeightedPoint<T>],
    k: usize,
    eps: f64,
    mode: DistanceMode,
    seed: u64,
) -> Result<PartitionedPoints<T>> {
    build_partition(points, k, &CoresetParams::new(Technique::Chen, eps, 0.5), mode, seed)
}

pub fn build_partition<T: Scalar>(
    points: &[WeightedPoint<T>],
    k: usize,
    params: &CoresetParams,
    mode: DistanceMode,
    seed: u64,
) -> Result<PartitionedPoints<T>> {
    params.validate()?;
    let first = points.first().ok_or(Error::EmptyInput)?;
    let d = first.coords().len();
    if params.technique == Technique::Hpm && d > MAX_GRID_DIM {
        return Err(Error::GridDimension(d));
    }
    let centers = local_search_kmedian(points, k, mode, seed)?;
    let total = cost(points, &centers, mode)?;
    let n: T = points.iter().map(|p| p.weight).sum();
    let base_radius = match mode {
        DistanceMode::Euclidean => total / n,
        DistanceMode::SquaredEuclidean => (total / n).sqrt(),
    };
    let mut partition = Partition {
        technique: params.technique,
        mode,
        centers,
        base_radius,
        levels: (n.as_f64().max(1.0)).log2().ceil() as u32,
        eps: params.eps,
        alpha_c: params.alpha_c,
        regions: Vec::new(),
        lookup: BTreeMap::new(),
    };
    // Outer levels are raised as needed so that every point is covered.
    let saved = partition.levels;
    partition.levels = u32::MAX;
    let keys: Vec<RegionKey> = points
        .iter()
        .map(|p| partition.key_of(p.coords()).ok_or(Error::NonFinite(p.point.arrival)))
        .collect::<Result<_>>()?;
    partition.levels = keys.iter().map(|k| k.1).max().unwrap_or(0).max(saved);

    let mut counts: BTreeMap<RegionKey, f64> = BTreeMap::new();
    for (key, p) in keys.iter().zip(points) {
        *counts.entry(key.clone()).or_insert(0.0) += p.weight.as_f64();
    }
    let kind = match params.technique {
        Technique::Hpm => RegionKind::GridCell,
        Technique::Chen => RegionKind::Ring,
    };
    partition.regions = counts
        .into_iter()
        .enumerate()
        .map(|(id, ((i, j, cell), count))| Region {
            id: id as u64,
            kind,
            center_index: i,
            level: j,
            cell: (kind == RegionKind::GridCell).then_some(cell),
            count,
        })
        .collect();
    partition.reindex();
    let region_of = keys
        .iter()
        .map(|key| partition.regions[partition.lookup[key]].id)
        .collect();
    Ok(PartitionedPoints { partition, region_of })
}

/// Chen's per-ring budget `min(n_R, ceil(ε⁻² d k ln(k ln n / (ε δ))))`; one
/// point per cell for the grid construction.
pub fn default_s_cc(params: &CoresetParams, d: usize, k: usize, n: f64, region: &Region) -> u64 {
    match params.technique {
        Technique::Hpm => 1,
        Technique::Chen => {
            let (e, dl) = (params.eps, params.delta);
            let ln_n = n.ln().max(1.0);
            let arg = (k as f64 * ln_n / (e * dl)).max(std::f64::consts::E);
            let s = (d as f64 * k as f64 * arg.ln() / (e * e)).ceil();
            s.min(region.count.round().max(1.0)) as u64
        }
    }
}

/// A weighted coreset point tagged with its region.
#[derive(Clone, Debug, PartialEq)]
pub struct CoresetPoint<T> {
    pub point: WeightedPoint<T>,
    pub region: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoresetWithPartition<T> {
    pub points: Vec<CoresetPoint<T>>,
    pub partitions: Vec<Partition<T>>,
    pub eps: f64,
    pub k: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct PointRecord<T> {
    coords: Vec<T>,
    weight: T,
    region_id: u64,
    arrival: u64,
}

#[derive(Serialize, Deserialize)]
struct CoresetRecord<T> {
    version: u32,
    eps: f64,
    k: usize,
    points: Vec<PointRecord<T>>,
    partitions: Vec<Partition<T>>,
}

impl<T: Scalar> CoresetWithPartition<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.points.iter().map(|p| p.point.weight.as_f64()).sum()
    }

    pub fn region_count(&self) -> usize {
        self.partitions.iter().map(|p| p.regions.len()).sum()
    }

    pub fn regions(&self) -> impl Iterator<Item = &Region> {
        self.partitions.iter().flat_map(|p| p.regions.iter())
    }

    pub fn region(&self, id: u64) -> Option<&Region> {
        self.partitions.iter().find_map(|p| p.region(id))
    }

    pub fn weighted_points(&self) -> Vec<WeightedPoint<T>> {
        self.points.iter().map(|p| p.point.clone()).collect()
    }

    /// Concatenates coresets, renumbering region ids so they stay unique.
    pub fn union(parts: impl IntoIterator<Item = CoresetWithPartition<T>>) -> Option<Self> {
        let mut out: Option<Self> = None;
        for mut part in parts {
            let offset = out
                .as_ref()
                .and_then(|o| o.regions().map(|r| r.id + 1).max())
                .unwrap_or(0);
            for p in &mut part.partitions {
                p.shift_ids(offset);
            }
            for p in &mut part.points {
                p.region += offset;
            }
            match &mut out {
                None => out = Some(part),
                Some(o) => {
                    o.points.extend(part.points);
                    o.partitions.extend(part.partitions);
                    o.eps = o.eps.max(part.eps);
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let rec = CoresetRecord {
            version: CORESET_FORMAT_VERSION,
            eps: self.eps,
            k: self.k,
            points: self
                .points
                .iter()
                .map(|p| PointRecord {
                    coords: p.point.point.coords.clone(),
                    weight: p.point.weight,
                    region_id: p.region,
                    arrival: p.point.point.arrival,
                })
                .collect(),
            partitions: self.partitions.clone(),
        };
        Ok(serde_json::to_string(&rec)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rec: CoresetRecord<T> = serde_json::from_str(s)?;
        if rec.version != CORESET_FORMAT_VERSION {
            return Err(Error::Serde(format!("unsupported coreset version {}", rec.version)));
        }
        let mut partitions = rec.partitions;
        for p in &mut partitions {
            p.reindex();
        }
        let points = rec
            .points
            .into_iter()
            .map(|r| {
                Ok(CoresetPoint {
                    point: WeightedPoint::new(Point::new(r.arrival, r.coords, r.arrival), r.weight)?,
                    region: r.region_id,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            points,
            partitions,
            eps: rec.eps,
            k: rec.k,
        })
    }
}

/// Splits real weights into integer unit counts summing to `round(Σ w)`,
/// by largest remainder with ties to the lower index.
fn expand_units<T: Scalar>(weights: &[T]) -> Vec<u64> {
    let total: f64 = weights.iter().map(|w| w.as_f64()).sum();
    let target = total.round() as u64;
    let mut units: Vec<u64> = weights.iter().map(|w| w.as_f64().floor() as u64).collect();
    let assigned: u64 = units.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    let frac = |i: usize| weights[i].as_f64() - weights[i].as_f64().floor();
    order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));
    let mut left = target.saturating_sub(assigned);
    for &i in order.iter().cycle().take(weights.len() * 2) {
        if left == 0 {
            break;
        }
        units[i] += 1;
        left -= 1;
    }
    units
}

/// Uniform per-region sampling over the partition of `points`.
///
/// A region of weight `n_R` keeps `r = min(U, max(s_CC, m))` samples, where
/// `U` is its integer-expanded size and `m` the ε-sample size with the VC
/// dimension inflated by `ln n`. Each sample carries weight `n_R / r`; if
/// `r >= U` the region's points pass through unchanged.
pub fn unified_sample<T: Scalar>(
    points: &[WeightedPoint<T>],
    partitioned: PartitionedPoints<T>,
    k: usize,
    params: &CoresetParams,
    s_cc: impl Fn(&Region) -> u64,
    seed: u64,
) -> Result<CoresetWithPartition<T>> {
    params.validate()?;
    let PartitionedPoints { partition, region_of } = partitioned;
    if region_of.len() != points.len() {
        return Err(Error::InvalidParameter("partition does not cover the points".into()));
    }
    let d = partition.centers.dim();
    let n: f64 = points.iter().map(|p| p.weight.as_f64()).sum();
    let d_vc = params.vc_dim(d) * n.ln().max(1.0);

    let mut members: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, &r) in region_of.iter().enumerate() {
        members.entry(r).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(points.len());
    for region in &partition.regions {
        let Some(idx) = members.get(&region.id) else {
            return Err(Error::UnknownRegion(region.id));
        };
        let weights: Vec<T> = idx.iter().map(|&i| points[i].weight).collect();
        let units = expand_units(&weights);
        let pop: u64 = units.iter().sum();
        let m = eps_sample_size_with(params.c_vc, d_vc, params.eps, params.delta, u64::MAX)?;
        let r = m.max(s_cc(region)).min(pop);
        if r >= pop {
            out.extend(idx.iter().map(|&i| CoresetPoint {
                point: points[i].clone(),
                region: region.id,
            }));
            continue;
        }
        let n_r: T = weights.iter().copied().sum();
        let each = n_r / T::of(r as f64);
        let mut owner = Vec::with_capacity(pop as usize);
        for (slot, &u) in units.iter().enumerate() {
            owner.extend(std::iter::repeat_n(slot, u as usize));
        }
        let mut hits = vec![0u64; idx.len()];
        for unit in rand::seq::index::sample(&mut rng, pop as usize, r as usize) {
            hits[owner[unit]] += 1;
        }
        for (slot, &h) in hits.iter().enumerate() {
            if h > 0 {
                out.push(CoresetPoint {
                    point: WeightedPoint {
                        point: points[idx[slot]].point.clone(),
                        weight: each * T::of(h as f64),
                    },
                    region: region.id,
                });
            }
        }
    }
    Ok(CoresetWithPartition {
        points: out,
        partitions: vec![partition],
        eps: params.eps,
        k,
    })
}

/// Partition plus sampling with the default per-region budgets.
pub fn build_coreset<T: Scalar>(
    points: &[WeightedPoint<T>],
    k: usize,
    params: &CoresetParams,
    mode: DistanceMode,
    seed: u64,
) -> Result<CoresetWithPartition<T>> {
    let parts = build_partition(points, k, params, mode, seed)?;
    let d = parts.partition.centers.dim();
    let n: f64 = points.iter().map(|p| p.weight.as_f64()).sum();
    unified_sample(
        points,
        parts,
        k,
        params,
        |r| default_s_cc(params, d, k, n, r),
        mix_seed(seed, 1),
    )
}

/// `|COST(P, C) - COST(K, C)| / COST(P, C)`.
pub fn coreset_cost_error<T: Scalar>(
    points: &[WeightedPoint<T>],
    coreset: &CoresetWithPartition<T>,
    centers: &CenterSet<T>,
    mode: DistanceMode,
) -> Result<f64> {
    let exact = cost(points, centers, mode)?.as_f64();
    let approx = cost(&coreset.weighted_points(), centers, mode)?.as_f64();
    relative_error(exact, approx)
}

pub(crate) fn relative_error(exact: f64, approx: f64) -> Result<f64> {
    if exact > 0.0 {
        Ok((exact - approx).abs() / exact)
    } else if approx == 0.0 {
        Ok(0.0)
    } else {
        Err(Error::ZeroReferenceCost)
    }
}

/// `k` centers drawn uniformly from the bounding box of `points`.
pub fn random_centers<T: Scalar, R: Rng>(points: &[WeightedPoint<T>], k: usize, rng: &mut R) -> Result<CenterSet<T>> {
    let first = points.first().ok_or(Error::EmptyInput)?;
    let d = first.coords().len();
    let mut lo = first.coords().to_vec();
    let mut hi = lo.clone();
    for p in points {
        for (t, &x) in p.coords().iter().enumerate() {
            lo[t] = lo[t].min(x);
            hi[t] = hi[t].max(x);
        }
    }
    let mut centers: Vec<Vec<T>> = Vec::with_capacity(k);
    for _ in 0..k {
        let c: Vec<T> = (0..d)
            .map(|t| lo[t] + (hi[t] - lo[t]) * T::of(rng.random::<f64>()))
            .collect();
        // a flat bounding box yields repeats; keep one copy
        if !centers.contains(&c) {
            centers.push(c);
        }
    }
    CenterSet::new(centers)
}

/// Deletion fraction each construction's slack argument tolerates.
pub fn slack_fraction(technique: Technique, eps: f64, d: usize) -> f64 {
    match technique {
        Technique::Hpm => eps * eps / (5.0 * (d as f64).sqrt()),
        Technique::Chen => eps * eps / 2.0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlackReport {
    pub fraction: f64,
    pub deleted: usize,
    /// Max over center sets of `Σ_R |COST(R', C) - COST(R, C)| / COST(P, C)`.
    pub region_error: f64,
    /// Max coreset error of a re-sampled coreset of the perturbed set against `P`.
    pub resample_error: f64,
    pub eps: f64,
}

impl SlackReport {
    pub fn passes(&self) -> bool {
        self.region_error <= self.eps && self.resample_error <= 3.0 * self.eps
    }
}

/// Deletes `fraction · n_R` random points from every region, then measures
/// how far region costs and a re-sampled coreset move.
#[allow(clippy::too_many_arguments)]
pub fn slack_perturbation_check<T: Scalar>(
    points: &[WeightedPoint<T>],
    k: usize,
    params: &CoresetParams,
    mode: DistanceMode,
    trials: usize,
    seed: u64,
    fraction: Option<f64>,
) -> Result<SlackReport> {
    let parts = build_partition(points, k, params, mode, seed)?;
    let d = parts.partition.centers.dim();
    let fraction = fraction.unwrap_or_else(|| slack_fraction(params.technique, params.eps, d));
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 2));

    let mut members: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, &r) in parts.region_of.iter().enumerate() {
        members.entry(r).or_default().push(i);
    }
    let mut deleted = vec![false; points.len()];
    let mut removed = 0;
    for idx in members.values() {
        let m = (fraction * idx.len() as f64).floor() as usize;
        for pos in rand::seq::index::sample(&mut rng, idx.len(), m) {
            deleted[idx[pos]] = true;
        }
        removed += m;
    }
    let kept: Vec<usize> = (0..points.len()).filter(|&i| !deleted[i]).collect();
    let perturbed: Vec<WeightedPoint<T>> = kept.iter().map(|&i| points[i].clone()).collect();

    let mut region_error: f64 = 0.0;
    let mut resample_error: f64 = 0.0;
    let resampled = if perturbed.is_empty() {
        None
    } else {
        let mut sub = parts.partition.clone();
        let region_of: Vec<u64> = kept.iter().map(|&i| parts.region_of[i]).collect();
        let mut counts: BTreeMap<u64, f64> = BTreeMap::new();
        for (&r, p) in region_of.iter().zip(&perturbed) {
            *counts.entry(r).or_insert(0.0) += p.weight.as_f64();
        }
        sub.regions.retain(|r| counts.contains_key(&r.id));
        for r in &mut sub.regions {
            r.count = counts[&r.id];
        }
        sub.reindex();
        let n: f64 = perturbed.iter().map(|p| p.weight.as_f64()).sum();
        Some(unified_sample(
            &perturbed,
            PartitionedPoints { partition: sub, region_of },
            k,
            params,
            |r| default_s_cc(params, d, k, n, r),
            mix_seed(seed, 3),
        )?)
    };

    for _ in 0..trials {
        let centers = random_centers(points, k, &mut rng)?;
        let total = cost(points, &centers, mode)?.as_f64();
        let mut diff = 0.0;
        for idx in members.values() {
            let gone: f64 = idx
                .iter()
                .filter(|&&i| deleted[i])
                .map(|&i| points[i].weight.as_f64() * centers.nearest(points[i].coords(), mode).1.as_f64())
                .sum();
            diff += gone;
        }
        if total > 0.0 {
            region_error = region_error.max(diff / total);
        }
        if let Some(k2) = &resampled {
            let approx = cost(&k2.weighted_points(), &centers, mode)?.as_f64();
            resample_error = resample_error.max(relative_error(total, approx)?);
        }
    }
    Ok(SlackReport {
        fraction,
        deleted: removed,
        region_error,
        resample_error,
        eps: params.eps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wp(coords: &[Vec<f64>]) -> Vec<WeightedPoint<f64>> {
        coords
            .iter()
            .enumerate()
            .map(|(i, c)| WeightedPoint::unit(Point::new(i as u64 + 1, c.clone(), i as u64 + 1)))
            .collect()
    }

    fn uniform(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<WeightedPoint<f64>> {
        let c: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random()).collect()).collect();
        wp(&c)
    }

    #[test]
    fn sample_size_formula() {
        assert_eq!(eps_sample_size(2.0, 0.5, 0.5, 1_000_000).unwrap(), 14);
        assert_eq!(eps_sample_size(2.0, 0.5, 0.5, 5).unwrap(), 5);
        let oracle = |e: f64| 1.0 / (e * e) * (4.0 * (4.0 / e).ln() + (10f64).ln());
        let small = eps_sample_size(4.0, 0.1, 0.1, u64::MAX).unwrap();
        let big = eps_sample_size(4.0, 0.2, 0.1, u64::MAX).unwrap();
        assert_eq!(small, oracle(0.1).ceil() as u64);
        // quartering is exact up to the drift of ln(d/eps)
        let drift = 4.0 * 2f64.ln() / (0.1 * 0.1);
        assert!(((small as f64) - 4.0 * big as f64).abs() <= drift + 4.0);
        assert!(eps_sample_size(0.5, 0.5, 0.5, 10).is_err());
        assert!(eps_sample_size(2.0, 1.0, 0.5, 10).is_err());
        assert!(eps_sample_size(2.0, 0.5, 0.0, 10).is_err());
    }

    #[test]
    fn vc_dims() {
        let p = CoresetParams::new(Technique::Hpm, 0.2, 0.1);
        assert_eq!(p.vc_dim(3), 6.0);
        let c = CoresetParams::new(Technique::Chen, 0.2, 0.1);
        assert!((c.vc_dim(3) - 2.0 * 4.0 * 3.0).abs() < 1e-12);
    }

    #[test]
    fn coincident_points_single_region() {
        let p = wp(&vec![vec![2.0, 2.0]; 7]);
        for part in [hpm_partition(&p, 2, 0.2, DistanceMode::Euclidean, 0).unwrap(), chen_partition(&p, 2, 0.2, DistanceMode::Euclidean, 0).unwrap()] {
            assert_eq!(part.partition.regions.len(), 1);
            assert_eq!(part.partition.regions[0].count, 7.0);
            assert_eq!(part.partition.base_radius, 0.0);
            assert!(part.partition.locate(&[2.0, 2.0]).is_some());
            assert!(part.partition.locate(&[2.0, 2.5]).is_none());
        }
    }

    #[test]
    fn two_points_one_center() {
        let p = wp(&[vec![0.0, 0.0], vec![1.0, 0.0]]);
        let part = hpm_partition(&p, 1, 0.2, DistanceMode::Euclidean, 0).unwrap();
        assert_eq!(part.partition.centers.len(), 1);
        assert_eq!(part.partition.total_count(), 2.0);
        for (pt, &r) in p.iter().zip(&part.region_of) {
            assert_eq!(part.partition.locate(pt.coords()).unwrap().id, r);
        }
    }

    #[test]
    fn hpm_totality_and_region_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = uniform(&mut rng, 200, 2);
        let (k, eps) = (2, 0.2);
        let part = hpm_partition(&p, k, eps, DistanceMode::Euclidean, 5).unwrap();
        let partition = &part.partition;
        // direct membership scan: every point lies in exactly one region
        let side = |j: u32| eps / (10.0 * 2f64.sqrt() * 5.0) * 2f64.powi(j as i32) * partition.base_radius;
        for (pt, &rid) in p.iter().zip(&part.region_of) {
            let hits: Vec<&Region> = partition
                .regions
                .iter()
                .filter(|r| {
                    let c = &partition.centers.centers()[r.center_index];
                    let near = partition.centers.nearest(pt.coords(), DistanceMode::Euclidean).0 == r.center_index;
                    let dd = dist_e(pt.coords(), c);
                    let lo = if r.level == 0 { -1.0 } else { partition.base_radius * 2f64.powi(r.level as i32 - 1) };
                    let hi = partition.base_radius * 2f64.powi(r.level as i32);
                    let cell = r.cell.as_ref().unwrap();
                    let inside = (0..2).all(|t| ((pt.coords()[t] - c[t]) / side(r.level)).floor() as i64 == cell[t]);
                    near && dd > lo && dd <= hi && inside
                })
                .collect();
            assert_eq!(hits.len(), 1);
            assert_eq!(hits[0].id, rid);
        }
        let log_n = (200f64).log2();
        let bound = k as f64 * (log_n + 1.0) * (10.0 * 2f64.sqrt() * 5.0 / eps + 2.0).powi(2);
        assert!((partition.regions.len() as f64) <= bound);
    }

    fn dist_e(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }

    #[test]
    fn hpm_dimension_cap() {
        let p = wp(&[vec![0.0; 5], vec![1.0; 5]]);
        assert_eq!(hpm_partition(&p, 1, 0.2, DistanceMode::Euclidean, 0).unwrap_err(), Error::GridDimension(5));
        assert!(chen_partition(&p, 1, 0.2, DistanceMode::Euclidean, 0).is_ok());
    }

    #[test]
    fn chen_rings_match_radius_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = uniform(&mut rng, 500, 10);
        let part = chen_partition(&p, 3, 0.2, DistanceMode::Euclidean, 9).unwrap();
        let pa = &part.partition;
        let r = pa.base_radius;
        let mut per_center = vec![0.0; pa.centers.len()];
        for (pt, &rid) in p.iter().zip(&part.region_of) {
            let reg = pa.region(rid).unwrap();
            let dists: Vec<f64> = pa.centers.centers().iter().map(|c| dist_e(pt.coords(), c)).collect();
            let i = (0..dists.len()).fold(0, |b, i| if dists[i] < dists[b] { i } else { b });
            assert_eq!(reg.center_index, i);
            let mut j = 0;
            while dists[i] > r * 2f64.powi(j) {
                j += 1;
            }
            assert_eq!(reg.level, j as u32);
            per_center[i] += 1.0;
        }
        for (i, &c) in per_center.iter().enumerate() {
            let s: f64 = pa.regions.iter().filter(|r| r.center_index == i).map(|r| r.count).sum();
            assert_eq!(s, c);
        }
    }

    #[test]
    fn chen_single_ring() {
        // all points on a circle of radius 1 around (0,0) plus the center itself
        let mut c = vec![vec![0.0, 0.0]];
        for t in 0..12 {
            let a = t as f64 * std::f64::consts::PI / 6.0;
            c.push(vec![a.cos(), a.sin()]);
        }
        let p = wp(&c);
        let part = chen_partition(&p, 1, 0.2, DistanceMode::Euclidean, 0).unwrap();
        let center = &part.partition.centers.centers()[0];
        if dist_e(center, &[0.0, 0.0]) < 1e-12 {
            let ring: Vec<u64> = part.region_of[1..].to_vec();
            assert!(ring.iter().all(|&r| r == ring[0]));
        }
        assert_eq!(part.partition.total_count(), 13.0);
    }

    #[test]
    fn small_regions_pass_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = uniform(&mut rng, 60, 2);
        let params = CoresetParams::new(Technique::Hpm, 0.2, 0.1);
        let k = build_coreset(&p, 2, &params, DistanceMode::Euclidean, 1).unwrap();
        assert_eq!(k.len(), 60);
        assert!(k.points.iter().all(|q| q.point.weight == 1.0));
        let c = random_centers(&p, 2, &mut rng).unwrap();
        assert!(coreset_cost_error(&p, &k, &c, DistanceMode::Euclidean).unwrap() < 1e-12);
    }

    #[test]
    fn sampling_conserves_weight_and_membership() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // grid cells are tiny at desk scale, so repeat a few locations to
        // give the grid something to sample from
        let sites = uniform(&mut rng, 20, 2);
        let coords: Vec<Vec<f64>> = (0..400).map(|i| sites[(i * 7) % 20].coords().to_vec()).collect();
        let p = wp(&coords);
        for tech in [Technique::Hpm, Technique::Chen] {
            let params = CoresetParams::new(tech, 0.2, 0.1).with_c_vc(0.001);
            let parts = build_partition(&p, 2, &params, DistanceMode::Euclidean, 4).unwrap();
            let k = unified_sample(&p, parts, 2, &params, |_| 1, 4).unwrap();
            assert!(k.len() < 400, "{tech:?} kept {}", k.len());
            assert!((k.total_weight() - 400.0).abs() < 1e-9 * 400.0);
            let part = &k.partitions[0];
            for q in &k.points {
                assert_eq!(part.locate(q.point.coords()).unwrap().id, q.region);
            }
            for r in &part.regions {
                let w: f64 = k.points.iter().filter(|q| q.region == r.id).map(|q| q.point.weight).sum();
                assert!((w - r.count).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn coreset_error_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = uniform(&mut rng, 150, 3);
        let params = CoresetParams::new(Technique::Chen, 0.2, 0.1).with_c_vc(0.002);
        let k = build_coreset(&p, 2, &params, DistanceMode::SquaredEuclidean, 3).unwrap();
        let c = random_centers(&p, 2, &mut rng).unwrap();
        let two_pass = |pts: &[(Vec<f64>, f64)]| -> f64 {
            pts.iter()
                .map(|(x, w)| {
                    w * c.centers().iter().map(|cc| dist_e(x, cc).powi(2)).fold(f64::INFINITY, f64::min)
                })
                .sum()
        };
        let exact = two_pass(&p.iter().map(|q| (q.coords().to_vec(), q.weight)).collect::<Vec<_>>());
        let approx = two_pass(&k.points.iter().map(|q| (q.point.coords().to_vec(), q.point.weight)).collect::<Vec<_>>());
        let got = coreset_cost_error(&p, &k, &c, DistanceMode::SquaredEuclidean).unwrap();
        assert!((got - (exact - approx).abs() / exact).abs() < 1e-12);
    }

    #[test]
    fn error_zero_reference() {
        let p = wp(&[vec![0.0], vec![1.0]]);
        let params = CoresetParams::new(Technique::Chen, 0.2, 0.1);
        let k = build_coreset(&p, 2, &params, DistanceMode::Euclidean, 0).unwrap();
        let c = CenterSet::new(vec![vec![0.0], vec![1.0]]).unwrap();
        assert!(coreset_cost_error(&p, &k, &c, DistanceMode::Euclidean).unwrap() < 1e-12);
        let mut shifted = k.clone();
        shifted.points[0].point.point.coords = vec![0.5];
        assert_eq!(coreset_cost_error(&p, &shifted, &c, DistanceMode::Euclidean).unwrap_err(), Error::ZeroReferenceCost);
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = uniform(&mut rng, 80, 2);
        let params = CoresetParams::new(Technique::Hpm, 0.2, 0.1).with_c_vc(0.001);
        let k = build_coreset(&p, 2, &params, DistanceMode::Euclidean, 1).unwrap();
        let s = k.to_json().unwrap();
        assert!(s.contains("\"regionId\""));
        assert!(s.contains("\"GRID_CELL\""));
        let back = CoresetWithPartition::<f64>::from_json(&s).unwrap();
        assert_eq!(back.to_json().unwrap(), s);
        let q = &back.points[0];
        assert_eq!(back.partitions[0].locate(q.point.coords()).unwrap().id, q.region);
    }

    #[test]
    fn slack_zero_fraction_and_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = uniform(&mut rng, 100, 2);
        let params = CoresetParams::new(Technique::Hpm, 0.2, 0.1);
        let rep = slack_perturbation_check(&p, 2, &params, DistanceMode::Euclidean, 10, 1, Some(0.0)).unwrap();
        assert_eq!(rep.region_error, 0.0);
        assert_eq!(rep.deleted, 0);
        let same = wp(&vec![vec![1.0, 1.0]; 40]);
        let rep = slack_perturbation_check(&same, 2, &params, DistanceMode::Euclidean, 10, 1, Some(0.5)).unwrap();
        assert_eq!(rep.region_error, 0.0);
    }

    #[test]
    fn slack_bound_both_techniques() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = uniform(&mut rng, 200, 2);
        for tech in [Technique::Hpm, Technique::Chen] {
            let params = CoresetParams::new(tech, 0.2, 0.1);
            let rep = slack_perturbation_check(&p, 2, &params, DistanceMode::Euclidean, 50, 2, None).unwrap();
            assert!(rep.passes(), "{tech:?}: {rep:?}");
        }
    }

    #[test]
    fn units_expand_to_rounded_total() {
        assert_eq!(expand_units(&[1.0f64, 1.0, 1.0]), vec![1, 1, 1]);
        assert_eq!(expand_units(&[1.5f64, 1.5, 2.0]), vec![2, 1, 2]);
        assert_eq!(expand_units(&[0.4f64, 0.4, 0.4]).iter().sum::<u64>(), 1);
    }
}
