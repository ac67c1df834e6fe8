//! Points, distance modes, clustering cost and nearest-center assignment.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A stream point. `arrival` is its 1-based stream position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point<T> {
    pub id: u64,
    pub coords: Vec<T>,
    pub arrival: u64,
}

impl<T: Scalar> Point<T> {
    pub fn new(id: u64, coords: Vec<T>, arrival: u64) -> Self {
        Self { id, coords, arrival }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// A point standing for `weight` copies of itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedPoint<T> {
    pub point: Point<T>,
    pub weight: T,
}

impl<T: Scalar> WeightedPoint<T> {
    pub fn new(point: Point<T>, weight: T) -> Result<Self> {
        if !(weight > T::zero()) || !weight.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "weight must be positive and finite, got {weight}"
            )));
        }
        Ok(Self { point, weight })
    }

    pub fn unit(point: Point<T>) -> Self {
        Self {
            point,
            weight: T::one(),
        }
    }

    pub fn coords(&self) -> &[T] {
        &self.point.coords
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    /// k-median objective.
    Euclidean,
    /// k-means objective.
    SquaredEuclidean,
}

impl DistanceMode {
    /// Exponent `p` of the objective `d(x, C)^p`.
    pub fn exponent(self) -> u32 {
        match self {
            DistanceMode::Euclidean => 1,
            DistanceMode::SquaredEuclidean => 2,
        }
    }

    /// Constant of the approximate triangle inequality, `2^(p-1)`.
    pub fn lambda(self) -> f64 {
        match self {
            DistanceMode::Euclidean => 1.0,
            DistanceMode::SquaredEuclidean => 2.0,
        }
    }

    /// Distance without the dimension check. Callers guarantee equal lengths.
    #[inline]
    pub fn eval<T: Scalar>(self, p: &[T], q: &[T]) -> T {
        let sq: T = p
            .iter()
            .zip(q)
            .map(|(&a, &b)| {
                let d = a - b;
                d * d
            })
            .sum();
        match self {
            DistanceMode::Euclidean => sq.sqrt(),
            DistanceMode::SquaredEuclidean => sq,
        }
    }
}

impl std::str::FromStr for DistanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclid" | "euclidean" => Ok(DistanceMode::Euclidean),
            "sqeuclid" | "squared_euclidean" => Ok(DistanceMode::SquaredEuclidean),
            other => Err(Error::InvalidParameter(format!("unknown mode {other:?}"))),
        }
    }
}

pub fn dist<T: Scalar>(p: &[T], q: &[T], mode: DistanceMode) -> Result<T> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    Ok(mode.eval(p, q))
}

/// A set of distinct centers.
///
/// Normally holds exactly `k` centers; solvers return fewer when the input has
/// fewer than `k` distinct locations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterSet<T> {
    centers: Vec<Vec<T>>,
}

impl<T: Scalar> CenterSet<T> {
    pub fn new(centers: Vec<Vec<T>>) -> Result<Self> {
        let first = centers.first().ok_or(Error::EmptyCenters)?;
        let d = first.len();
        if d == 0 {
            return Err(Error::InvalidParameter("zero-dimensional center".into()));
        }
        for (i, c) in centers.iter().enumerate() {
            if c.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: c.len(),
                });
            }
            if centers[..i].iter().any(|o| o == c) {
                return Err(Error::DuplicateCenter(i));
            }
        }
        Ok(Self { centers })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    pub fn centers(&self) -> &[Vec<T>] {
        &self.centers
    }

    pub fn into_inner(self) -> Vec<Vec<T>> {
        self.centers
    }

    /// Nearest center index and distance; ties go to the lowest index.
    #[inline]
    pub fn nearest(&self, p: &[T], mode: DistanceMode) -> (usize, T) {
        nearest_of(self.centers.iter().map(Vec::as_slice), p, mode)
            .expect("center set is nonempty")
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: d,
            });
        }
        Ok(())
    }
}

/// Nearest candidate with lowest-index tie breaking. `None` when empty.
#[inline]
pub(crate) fn nearest_of<'a, T: Scalar>(
    candidates: impl IntoIterator<Item = &'a [T]>,
    p: &[T],
    mode: DistanceMode,
) -> Option<(usize, T)> {
    let mut best: Option<(usize, T)> = None;
    for (i, c) in candidates.into_iter().enumerate() {
        let d = mode.eval(p, c);
        match best {
            Some((_, bd)) if !(d < bd) => {}
            _ => best = Some((i, d)),
        }
    }
    best
}

/// Weighted clustering cost `sum_p w_p * min_c d(p, c)`.
pub fn cost<T: Scalar>(
    points: &[WeightedPoint<T>],
    centers: &CenterSet<T>,
    mode: DistanceMode,
) -> Result<T> {
    let mut total = T::zero();
    for wp in points {
        centers.check_dim(wp.coords().len())?;
        total = total + wp.weight * centers.nearest(wp.coords(), mode).1;
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusteringAssignment {
    /// Center index for each input point.
    pub assignment: Vec<usize>,
    /// Number of points per center.
    pub counts: Vec<usize>,
}

pub fn assign<T: Scalar>(
    points: &[Point<T>],
    centers: &CenterSet<T>,
    mode: DistanceMode,
) -> Result<ClusteringAssignment> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut assignment = Vec::with_capacity(points.len());
    let mut counts = vec![0usize; centers.len()];
    for p in points {
        centers.check_dim(p.dim())?;
        let (i, _) = centers.nearest(&p.coords, mode);
        assignment.push(i);
        counts[i] += 1;
    }
    Ok(ClusteringAssignment { assignment, counts })
}

fn lex_cmp<T: Scalar>(a: &[T], b: &[T]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Collapses coincident weighted points, summing weights. Keeps first
/// occurrence order and the first occurrence's id and arrival.
pub(crate) fn merge_coincident<T: Scalar>(points: &[WeightedPoint<T>]) -> Vec<WeightedPoint<T>> {
    let coords: Vec<&[T]> = points.iter().map(|p| p.coords()).collect();
    let mut order: Vec<usize> = (0..coords.len()).collect();
    order.sort_by(|&a, &b| lex_cmp(coords[a], coords[b]).then(a.cmp(&b)));
    let mut groups: Vec<(usize, T)> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some((f, w)) if coords[*f] == coords[i] => *w = *w + points[i].weight,
            _ => groups.push((i, points[i].weight)),
        }
    }
    groups.sort_unstable_by_key(|g| g.0);
    groups
        .into_iter()
        .map(|(i, w)| WeightedPoint {
            point: points[i].point.clone(),
            weight: w,
        })
        .collect()
}

/// Count-based sliding window bookkeeping over a stream of dimension `dim`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowStream {
    window: u64,
    now: u64,
    dim: usize,
}

impl WindowStream {
    pub fn new(window: u64, dim: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidParameter("window size must be positive".into()));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        Ok(Self { window, now: 0, dim })
    }

    pub fn window(&self) -> u64 {
        self.window
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// First active arrival, `max(1, N - W + 1)`.
    pub fn window_start(&self) -> u64 {
        (self.now + 1).saturating_sub(self.window).max(1)
    }

    pub fn is_active(&self, arrival: u64) -> bool {
        arrival >= self.window_start() && arrival <= self.now
    }

    pub fn is_expired(&self, arrival: u64) -> bool {
        arrival < self.window_start()
    }

    pub fn is_full(&self) -> bool {
        self.now >= self.window
    }

    /// Stamps the next arrival. The point id equals its arrival.
    pub fn push<T: Scalar>(&mut self, coords: Vec<T>) -> Result<Point<T>> {
        if coords.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: coords.len(),
            });
        }
        let arrival = self.now + 1;
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite(arrival));
        }
        self.now = arrival;
        Ok(Point::new(arrival, coords, arrival))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn wp(c: &[f64], w: f64) -> WeightedPoint<f64> {
        WeightedPoint::new(Point::new(0, c.to_vec(), 1), w).unwrap()
    }

    #[test]
    fn dist_examples() {
        assert_eq!(dist(&[0.0, 0.0], &[3.0, 4.0], DistanceMode::Euclidean), Ok(5.0));
        assert_eq!(dist(&[0.0, 0.0], &[3.0, 4.0], DistanceMode::SquaredEuclidean), Ok(25.0));
        assert_eq!(dist(&[1.0, 1.0], &[1.0, 1.0], DistanceMode::Euclidean), Ok(0.0));
        assert_eq!(dist(&[3.0f32], &[0.0f32], DistanceMode::Euclidean), Ok(3.0f32));
        assert!(matches!(
            dist(&[0.0], &[1.0, 2.0], DistanceMode::Euclidean),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cost_examples() {
        let c = CenterSet::new(vec![vec![0.0, 0.0]]).unwrap();
        let p = [wp(&[0.0, 0.0], 1.0), wp(&[2.0, 0.0], 1.0)];
        assert_eq!(cost(&p, &c, DistanceMode::Euclidean).unwrap(), 2.0);

        let c = CenterSet::new(vec![vec![1.0, 0.0]]).unwrap();
        let p = [wp(&[0.0, 0.0], 3.0)];
        assert_eq!(cost(&p, &c, DistanceMode::SquaredEuclidean).unwrap(), 3.0);
    }

    #[test]
    fn cost_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for mode in [DistanceMode::Euclidean, DistanceMode::SquaredEuclidean] {
            let pts: Vec<_> = (0..8)
                .map(|_| wp(&[rng.random(), rng.random()], 1.0))
                .collect();
            let centers = vec![
                vec![rng.random::<f64>(), rng.random()],
                vec![rng.random::<f64>(), rng.random()],
            ];
            let mut oracle = 0.0;
            for p in &pts {
                let mut best = f64::INFINITY;
                for c in &centers {
                    let dx = p.coords()[0] - c[0];
                    let dy = p.coords()[1] - c[1];
                    let sq = dx * dx + dy * dy;
                    let d = if mode == DistanceMode::Euclidean { sq.sqrt() } else { sq };
                    best = best.min(d);
                }
                oracle += best;
            }
            let got = cost(&pts, &CenterSet::new(centers).unwrap(), mode).unwrap();
            assert!((got - oracle).abs() <= 1e-12 * oracle);
        }
    }

    #[test]
    fn center_set_rejects_empty_and_duplicates() {
        assert_eq!(CenterSet::<f64>::new(vec![]), Err(Error::EmptyCenters));
        assert_eq!(
            CenterSet::new(vec![vec![1.0], vec![1.0]]),
            Err(Error::DuplicateCenter(1))
        );
    }

    #[test]
    fn assign_examples() {
        let c = CenterSet::new(vec![vec![0.0, 0.0], vec![10.0, 0.0]]).unwrap();
        let p = vec![Point::new(1, vec![0.0, 0.0], 1), Point::new(2, vec![10.0, 0.0], 2)];
        let a = assign(&p, &c, DistanceMode::Euclidean).unwrap();
        assert_eq!(a.assignment, vec![0, 1]);
        assert_eq!(a.counts, vec![1, 1]);

        let p = vec![Point::new(1, vec![5.0, 0.0], 1)];
        assert_eq!(assign(&p, &c, DistanceMode::Euclidean).unwrap().assignment, vec![0]);
    }

    #[test]
    fn assign_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Point<f64>> = (0..20)
            .map(|i| Point::new(i, vec![rng.random(), rng.random()], i + 1))
            .collect();
        let centers: Vec<Vec<f64>> = (0..3).map(|_| vec![rng.random(), rng.random()]).collect();
        let mut counts = [0usize; 3];
        for p in &pts {
            let mut bi = 0;
            for ci in 1..3 {
                let d = |c: &Vec<f64>| (p.coords[0] - c[0]).powi(2) + (p.coords[1] - c[1]).powi(2);
                if d(&centers[ci]) < d(&centers[bi]) {
                    bi = ci;
                }
            }
            counts[bi] += 1;
        }
        let got = assign(&pts, &CenterSet::new(centers).unwrap(), DistanceMode::Euclidean).unwrap();
        assert_eq!(got.counts, counts.to_vec());
        assert_eq!(got.counts.iter().sum::<usize>(), 20);
    }

    #[test]
    fn distinct_and_merge() {
        let a = [1.0, 2.0];
        let b = [0.0, 5.0];
        let pts = [wp(&a, 1.0), wp(&b, 2.0), wp(&a, 3.0)];
        let m = merge_coincident(&pts);
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].weight, 4.0);
        assert_eq!(m[1].weight, 2.0);
    }

    #[test]
    fn window_stream_semantics() {
        let mut w = WindowStream::new(3, 1).unwrap();
        assert_eq!(w.window_start(), 1);
        for i in 0..5 {
            w.push(vec![i as f64]).unwrap();
        }
        assert_eq!(w.now(), 5);
        assert_eq!(w.window_start(), 3);
        assert!(w.is_expired(2));
        assert!(w.is_active(3) && w.is_active(5));
        assert!(w.push(vec![1.0, 2.0]).is_err());
        assert!(w.push(vec![f64::NAN]).is_err());
        assert!(WindowStream::new(0, 1).is_err());
    }

    fn coords3() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, 3)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2500))]

        #[test]
        fn symmetric_nonnegative_identity(p in coords3(), q in coords3()) {
            for mode in [DistanceMode::Euclidean, DistanceMode::SquaredEuclidean] {
                let a = mode.eval(&p, &q);
                let b = mode.eval(&q, &p);
                prop_assert!(a >= 0.0);
                prop_assert_eq!(a, b);
                prop_assert_eq!(mode.eval(&p, &p), 0.0);
            }
        }

        #[test]
        fn approximate_triangle_inequality(a in coords3(), b in coords3(), c in coords3()) {
            for mode in [DistanceMode::Euclidean, DistanceMode::SquaredEuclidean] {
                let lhs = mode.eval(&a, &c);
                let rhs = mode.lambda() * (mode.eval(&a, &b) + mode.eval(&b, &c));
                prop_assert!(lhs <= rhs * (1.0 + 1e-9) + 1e-12);
            }
        }

        #[test]
        fn cost_monotone_in_points_antimonotone_in_centers(
            pts in prop::collection::vec(coords3(), 1..12),
            extra in prop::collection::vec(coords3(), 0..6),
            cs in prop::collection::vec(coords3(), 1..4),
            more in coords3(),
        ) {
            let wa: Vec<_> = pts.iter().map(|c| wp(c, 1.0)).collect();
            let mut wab = wa.clone();
            wab.extend(extra.iter().map(|c| wp(c, 1.0)));
            let mut uniq: Vec<Vec<f64>> = Vec::new();
            for c in cs { if !uniq.contains(&c) { uniq.push(c); } }
            let c1 = CenterSet::new(uniq.clone()).unwrap();
            for mode in [DistanceMode::Euclidean, DistanceMode::SquaredEuclidean] {
                let ca = cost(&wa, &c1, mode).unwrap();
                let cab = cost(&wab, &c1, mode).unwrap();
                prop_assert!(ca <= cab * (1.0 + 1e-9) + 1e-12);
                if !uniq.contains(&more) {
                    let mut bigger = uniq.clone();
                    bigger.push(more.clone());
                    let c2 = CenterSet::new(bigger).unwrap();
                    prop_assert!(cost(&wa, &c2, mode).unwrap() <= ca * (1.0 + 1e-9) + 1e-12);
                }
            }
        }
    }
}
