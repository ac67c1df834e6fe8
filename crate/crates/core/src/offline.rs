//! Offline k-median / k-means solvers over weighted point sets.
//!
//! Centers are always restricted to input locations. [`brute_force_opt`] is
//! exact and exponential in `k`; [`local_search_kmedian`] is the single-swap
//! local search used as the offline approximation inside the streaming
//! structures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{cost, merge_coincident, CenterSet, DistanceMode, Point, WeightedPoint};
use crate::pls::Summary;
use crate::scalar::Scalar;

/// Largest number of distinct locations [`brute_force_opt`] will enumerate.
pub const DEFAULT_BRUTE_FORCE_CAP: usize = 20;

/// Maps larger than this are not enumerated by [`check_smoothness_bound`].
pub const EXHAUSTIVE_MAP_LIMIT: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalSearchParams {
    /// A swap is accepted only if it lowers the cost below `(1 - eps/k) * cost`.
    pub eps: f64,
    pub restarts: usize,
    pub max_swaps: usize,
}

impl Default for LocalSearchParams {
    fn default() -> Self {
        Self {
            eps: 0.01,
            restarts: 3,
            max_swaps: 10_000,
        }
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    Ok(())
}

fn check_dims<T: Scalar>(points: &[WeightedPoint<T>]) -> Result<usize> {
    let d = points.first().ok_or(Error::EmptyInput)?.coords().len();
    for p in points {
        if p.coords().len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: p.coords().len(),
            });
        }
    }
    Ok(d)
}

fn centers_of<T: Scalar>(points: &[WeightedPoint<T>], idx: &[usize]) -> CenterSet<T> {
    CenterSet::new(idx.iter().map(|&i| points[i].coords().to_vec()).collect())
        .expect("distinct input locations")
}

/// Exact optimum over all k-subsets of the distinct input locations.
///
/// When there are at most `k` distinct locations every one becomes a center
/// and the cost is zero.
pub fn brute_force_opt<T: Scalar>(
    points: &[WeightedPoint<T>],
    k: usize,
    mode: DistanceMode,
) -> Result<(CenterSet<T>, T)> {
    brute_force_opt_capped(points, k, mode, DEFAULT_BRUTE_FORCE_CAP)
}

pub fn brute_force_opt_capped<T: Scalar>(
    points: &[WeightedPoint<T>],
    k: usize,
    mode: DistanceMode,
    cap: usize,
) -> Result<(CenterSet<T>, T)> {
    check_k(k)?;
    check_dims(points)?;
    let uniq = merge_coincident(points);
    let m = uniq.len();
    if m <= k {
        return Ok((centers_of(&uniq, &(0..m).collect::<Vec<_>>()), T::zero()));
    }
    if m > cap {
        return Err(Error::CapExceeded { distinct: m, cap });
    }
    let dm: Vec<Vec<T>> = uniq
        .iter()
        .map(|p| uniq.iter().map(|c| mode.eval(p.coords(), c.coords())).collect())
        .collect();

    let mut comb: Vec<usize> = (0..k).collect();
    let mut best_cost = T::infinity();
    let mut best = comb.clone();
    loop {
        let mut total = T::zero();
        for (p, row) in uniq.iter().zip(&dm) {
            let d = comb
                .iter()
                .map(|&c| row[c])
                .fold(T::infinity(), |a, b| a.min(b));
            total = total + p.weight * d;
            if total >= best_cost {
                break;
            }
        }
        if total < best_cost {
            best_cost = total;
            best.clone_from(&comb);
        }
        // next combination in lexicographic order
        let mut i = k;
        loop {
            if i == 0 {
                return Ok((centers_of(&uniq, &best), best_cost));
            }
            i -= 1;
            if comb[i] < m - k + i {
                break;
            }
        }
        comb[i] += 1;
        for j in i + 1..k {
            comb[j] = comb[j - 1] + 1;
        }
    }
}

pub fn local_search_kmedian<T: Scalar>(
    points: &[WeightedPoint<T>],
    k: usize,
    mode: DistanceMode,
    seed: u64,
) -> Result<CenterSet<T>> {
    local_search_kmedian_with(points, k, mode, seed, &LocalSearchParams::default())
}

/// Multi-start single-swap local search. Deterministic in `seed`.
pub fn local_search_kmedian_with<T: Scalar>(
    points: &[WeightedPoint<T>],
    k: usize,
    mode: DistanceMode,
    seed: u64,
    params: &LocalSearchParams,
) -> Result<CenterSet<T>> {
    check_k(k)?;
    check_dims(points)?;
    let uniq = merge_coincident(points);
    let m = uniq.len();
    if m <= k {
        return Ok(centers_of(&uniq, &(0..m).collect::<Vec<_>>()));
    }
    let mut best: Option<(T, Vec<usize>)> = None;
    for r in 0..params.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let init = seed_centers(&uniq, k, mode, &mut rng);
        let (c, sol) = swap_descent(&uniq, init, mode, params);
        if best.as_ref().is_none_or(|(bc, _)| c < *bc) {
            best = Some((c, sol));
        }
    }
    let (_, mut sol) = best.expect("at least one restart");
    sol.sort_unstable();
    Ok(centers_of(&uniq, &sol))
}

/// D^p-weighted seeding over distinct locations.
fn seed_centers<T: Scalar>(
    pts: &[WeightedPoint<T>],
    k: usize,
    mode: DistanceMode,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let total_w: f64 = pts.iter().map(|p| p.weight.as_f64()).sum();
    let mut target = rng.random::<f64>() * total_w;
    let mut first = pts.len() - 1;
    for (i, p) in pts.iter().enumerate() {
        target -= p.weight.as_f64();
        if target <= 0.0 {
            first = i;
            break;
        }
    }
    let mut chosen = vec![first];
    let mut nearest: Vec<f64> = pts
        .iter()
        .map(|p| mode.eval(p.coords(), pts[first].coords()).as_f64())
        .collect();
    while chosen.len() < k {
        let mass: f64 = pts.iter().zip(&nearest).map(|(p, d)| p.weight.as_f64() * d).sum();
        let pick = if mass > 0.0 {
            let mut t = rng.random::<f64>() * mass;
            let mut pick = None;
            for (i, (p, d)) in pts.iter().zip(&nearest).enumerate() {
                if *d <= 0.0 {
                    continue;
                }
                t -= p.weight.as_f64() * d;
                pick = Some(i);
                if t <= 0.0 {
                    break;
                }
            }
            pick.expect("positive mass has a positive entry")
        } else {
            (0..pts.len()).find(|i| !chosen.contains(i)).expect("m > k")
        };
        chosen.push(pick);
        for (i, p) in pts.iter().enumerate() {
            let d = mode.eval(p.coords(), pts[pick].coords()).as_f64();
            if d < nearest[i] {
                nearest[i] = d;
            }
        }
    }
    chosen
}

/// Returns the final cost and chosen candidate indices.
fn swap_descent<T: Scalar>(
    pts: &[WeightedPoint<T>],
    mut sol: Vec<usize>,
    mode: DistanceMode,
    params: &LocalSearchParams,
) -> (T, Vec<usize>) {
    let n = pts.len();
    let k = sol.len();
    let factor = T::of(1.0 - params.eps / k as f64);
    let mut d1 = vec![T::zero(); n];
    let mut d2 = vec![T::zero(); n];
    let mut near = vec![0usize; n];
    let mut dx = vec![T::zero(); n];
    let mut in_sol = vec![false; n];
    for &s in &sol {
        in_sol[s] = true;
    }
    let mut current;
    let mut swaps = 0;
    loop {
        current = T::zero();
        for (p, wp) in pts.iter().enumerate() {
            let (mut b1, mut b2, mut bi) = (T::infinity(), T::infinity(), 0);
            for (slot, &c) in sol.iter().enumerate() {
                let d = mode.eval(wp.coords(), pts[c].coords());
                if d < b1 {
                    b2 = b1;
                    b1 = d;
                    bi = slot;
                } else if d < b2 {
                    b2 = d;
                }
            }
            d1[p] = b1;
            d2[p] = b2;
            near[p] = bi;
            current = current + wp.weight * b1;
        }
        if current <= T::zero() || swaps >= params.max_swaps {
            break;
        }
        let mut best: Option<(T, usize, usize)> = None;
        let mut delta = vec![T::zero(); k];
        for x in 0..n {
            if in_sol[x] {
                continue;
            }
            for (p, wp) in pts.iter().enumerate() {
                dx[p] = mode.eval(wp.coords(), pts[x].coords());
            }
            delta.iter_mut().for_each(|v| *v = T::zero());
            let mut base = T::zero();
            for p in 0..n {
                let a = d1[p].min(dx[p]);
                let b = d2[p].min(dx[p]);
                base = base + pts[p].weight * a;
                delta[near[p]] = delta[near[p]] + pts[p].weight * (b - a);
            }
            for (slot, dl) in delta.iter().enumerate() {
                let c = base + *dl;
                if best.is_none_or(|(bc, _, _)| c < bc) {
                    best = Some((c, slot, x));
                }
            }
        }
        match best {
            Some((c, slot, x)) if c < factor * current => {
                in_sol[sol[slot]] = false;
                in_sol[x] = true;
                sol[slot] = x;
                swaps += 1;
            }
            _ => break,
        }
    }
    (current, sol)
}

/// A clustering map over two summaries, with per-center represented weight
/// on each side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringMapWithCounts<T> {
    pub centers: CenterSet<T>,
    pub counts_a: Vec<u64>,
    pub counts_b: Vec<u64>,
    /// Summary cost estimates plus the facility-to-center cost.
    pub total_cost: T,
}

/// Per-center total (integer-rounded) weight of facilities mapped to their
/// nearest center.
pub fn facility_counts<T: Scalar>(
    facilities: &[WeightedPoint<T>],
    centers: &CenterSet<T>,
    mode: DistanceMode,
) -> Vec<u64> {
    let mut counts = vec![0u64; centers.len()];
    for f in facilities {
        let (i, _) = centers.nearest(f.coords(), mode);
        counts[i] += f.weight.round().to_u64().unwrap_or(0);
    }
    counts
}

pub fn clustering_map_with_counts<T: Scalar>(
    sa: &Summary<T>,
    sb: &Summary<T>,
    k: usize,
    mode: DistanceMode,
    seed: u64,
) -> Result<ClusteringMapWithCounts<T>> {
    let union: Vec<WeightedPoint<T>> = sa
        .facilities
        .iter()
        .chain(&sb.facilities)
        .cloned()
        .collect();
    let centers = local_search_kmedian(&union, k, mode, seed)?;
    let counts_a = facility_counts(&sa.facilities, &centers, mode);
    let counts_b = facility_counts(&sb.facilities, &centers, mode);
    let total_cost = sa.cost_estimate + sb.cost_estimate + cost(&union, &centers, mode)?;
    Ok(ClusteringMapWithCounts {
        centers,
        counts_a,
        counts_b,
        total_cost,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapSearch {
    /// Every clustering map over every candidate center set was considered.
    Exhaustive,
    /// Only the nearest-center map of the local-search solution was tested.
    Induced,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessCheck {
    /// `OPT(A ∪ B ∪ C, k)`.
    pub lhs: f64,
    /// `(1 + λ + βγλ) · OPT(B ∪ C, k)`.
    pub rhs: f64,
    /// `OPT(A ∪ B, k) <= γ · OPT(B, k)`.
    pub cost_hypothesis: bool,
    /// A β-approximate map of `A ∪ B` with `|t⁻¹(c) ∩ A| <= |t⁻¹(c) ∩ B|` exists.
    pub cardinality_hypothesis: bool,
    pub map_search: MapSearch,
    /// `lhs <= rhs` (relative tolerance 1e-9).
    pub bound_holds: bool,
}

impl SmoothnessCheck {
    pub fn hypotheses_met(&self) -> bool {
        self.cost_hypothesis && self.cardinality_hypothesis
    }

    /// True when the hypotheses hold and the bound does not.
    pub fn violated(&self) -> bool {
        self.hypotheses_met() && !self.bound_holds
    }
}

fn le_tol(a: f64, b: f64) -> bool {
    a <= b * (1.0 + 1e-9) + 1e-12
}

fn opt_value<T: Scalar>(pts: &[&Point<T>], k: usize, mode: DistanceMode) -> Result<f64> {
    if pts.is_empty() {
        return Ok(0.0);
    }
    let w: Vec<WeightedPoint<T>> = pts.iter().map(|p| WeightedPoint::unit((*p).clone())).collect();
    Ok(brute_force_opt(&w, k, mode)?.1.as_f64())
}

/// Tests the smoothness surrogate on concrete sets `A`, `B`, `C` (disjoint by
/// point id): when `OPT(A∪B) <= γ·OPT(B)` and a β-approximate clustering map
/// of `A∪B` with per-cluster `|A-part| <= |B-part|` exists, then
/// `OPT(A∪B∪C) <= (1+λ+βγλ)·OPT(B∪C)`.
pub fn check_smoothness_bound<T: Scalar>(
    a: &[Point<T>],
    b: &[Point<T>],
    c: &[Point<T>],
    k: usize,
    mode: DistanceMode,
    beta: f64,
    gamma: f64,
) -> Result<SmoothnessCheck> {
    check_k(k)?;
    if a.iter().any(|p| b.iter().any(|q| q.id == p.id)) {
        return Err(Error::InvalidParameter("A and B must be disjoint".into()));
    }
    let lambda = mode.lambda();
    let ab: Vec<&Point<T>> = a.iter().chain(b).collect();
    let abc: Vec<&Point<T>> = a.iter().chain(b).chain(c).collect();
    let bc: Vec<&Point<T>> = b.iter().chain(c).collect();
    let bs: Vec<&Point<T>> = b.iter().collect();

    let lhs = opt_value(&abc, k, mode)?;
    let rhs = (1.0 + lambda + beta * gamma * lambda) * opt_value(&bc, k, mode)?;
    let opt_ab = opt_value(&ab, k, mode)?;
    let cost_hypothesis = le_tol(opt_ab, gamma * opt_value(&bs, k, mode)?);

    let budget = beta * opt_ab;
    let (cardinality_hypothesis, map_search) = if a.is_empty() {
        (true, MapSearch::Exhaustive)
    } else if ab.len() <= EXHAUSTIVE_MAP_LIMIT {
        (exists_balanced_map(a, b, k, mode, budget), MapSearch::Exhaustive)
    } else {
        (induced_map_balanced(a, b, k, mode, budget)?, MapSearch::Induced)
    };

    Ok(SmoothnessCheck {
        lhs,
        rhs,
        cost_hypothesis,
        cardinality_hypothesis,
        map_search,
        bound_holds: le_tol(lhs, rhs),
    })
}

fn induced_map_balanced<T: Scalar>(
    a: &[Point<T>],
    b: &[Point<T>],
    k: usize,
    mode: DistanceMode,
    budget: f64,
) -> Result<bool> {
    let w: Vec<WeightedPoint<T>> = a.iter().chain(b).cloned().map(WeightedPoint::unit).collect();
    let centers = local_search_kmedian(&w, k, mode, 0)?;
    let mut diff = vec![0i64; centers.len()];
    let mut total = 0.0;
    for (i, p) in a.iter().chain(b).enumerate() {
        let (c, d) = centers.nearest(&p.coords, mode);
        total += d.as_f64();
        diff[c] += if i < a.len() { 1 } else { -1 };
    }
    Ok(le_tol(total, budget) && diff.iter().all(|&v| v <= 0))
}

/// Exhaustive search for a clustering map of `A ∪ B` onto some k-subset of
/// its distinct locations with cost within `budget` and every cluster
/// holding no more A-points than B-points.
fn exists_balanced_map<T: Scalar>(
    a: &[Point<T>],
    b: &[Point<T>],
    k: usize,
    mode: DistanceMode,
    budget: f64,
) -> bool {
    let all: Vec<&Point<T>> = a.iter().chain(b).collect();
    let w: Vec<WeightedPoint<T>> = all.iter().map(|p| WeightedPoint::unit((*p).clone())).collect();
    let sites: Vec<Vec<T>> = merge_coincident(&w)
        .into_iter()
        .map(|p| p.point.coords)
        .collect();
    let kk = k.min(sites.len());
    let is_a: Vec<bool> = (0..all.len()).map(|i| i < a.len()).collect();
    let limit = budget * (1.0 + 1e-9) + 1e-12;

    let mut comb: Vec<usize> = (0..kk).collect();
    loop {
        // distances from each point to each chosen center, sorted ascending
        let opts: Vec<Vec<(f64, usize)>> = all
            .iter()
            .map(|p| {
                let mut v: Vec<(f64, usize)> = comb
                    .iter()
                    .enumerate()
                    .map(|(slot, &s)| (mode.eval(&p.coords, &sites[s]).as_f64(), slot))
                    .collect();
                v.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
                v
            })
            .collect();
        // suffix sums of the cheapest assignment, for cost pruning
        let mut rest_min = vec![0.0; all.len() + 1];
        for i in (0..all.len()).rev() {
            rest_min[i] = rest_min[i + 1] + opts[i][0].0;
        }
        let mut rest_b = vec![0i64; all.len() + 1];
        for i in (0..all.len()).rev() {
            rest_b[i] = rest_b[i + 1] + i64::from(!is_a[i]);
        }
        let mut diff = vec![0i64; kk];
        if rest_min[0] <= limit
            && dfs_map(0, 0.0, &mut diff, &opts, &is_a, &rest_min, &rest_b, limit)
        {
            return true;
        }
        let m = sites.len();
        let mut i = kk;
        loop {
            if i == 0 {
                return false;
            }
            i -= 1;
            if comb[i] < m - kk + i {
                break;
            }
        }
        comb[i] += 1;
        for j in i + 1..kk {
            comb[j] = comb[j - 1] + 1;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn dfs_map(
    i: usize,
    spent: f64,
    diff: &mut [i64],
    opts: &[Vec<(f64, usize)>],
    is_a: &[bool],
    rest_min: &[f64],
    rest_b: &[i64],
    limit: f64,
) -> bool {
    let excess: i64 = diff.iter().map(|&d| d.max(0)).sum();
    if excess > rest_b[i] {
        return false;
    }
    if i == opts.len() {
        return excess == 0;
    }
    for &(d, slot) in &opts[i] {
        if spent + d + rest_min[i + 1] > limit {
            // options are sorted, later ones cost more
            break;
        }
        let step = if is_a[i] { 1 } else { -1 };
        diff[slot] += step;
        let ok = dfs_map(i + 1, spent + d, diff, opts, is_a, rest_min, rest_b, limit);
        diff[slot] -= step;
        if ok {
            return true;
        }
    }
    false
}
