//! Property suites for the bounds the structures rely on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use swcluster_core::coreset::{
    build_coreset, build_partition, coreset_cost_error, unified_sample, random_centers, slack_perturbation_check, SlackReport,
};
use swcluster_core::offline::{check_smoothness_bound, MapSearch};
use swcluster_core::range_space::{eps_sample_trials, EpsSampleReport};
use swcluster_core::{
    CoresetParams, DistanceMode, MergeReduce, MergeReduceConfig, Point, Technique, WeightedPoint,
};

const MODES: [DistanceMode; 2] = [DistanceMode::Euclidean, DistanceMode::SquaredEuclidean];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SmoothnessSuite {
    pub triples: usize,
    pub checks: usize,
    pub hypotheses_met: usize,
    pub exhaustive_maps: usize,
    pub violations: usize,
    /// The non-smooth fixture fails the cardinality hypothesis in both modes.
    pub counterexample_excluded: bool,
}

impl SmoothnessSuite {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.counterexample_excluded
    }
}

fn random_set(rng: &mut ChaCha8Rng, n: usize, id0: u64, lattice: bool) -> Vec<Point<f64>> {
    (0..n)
        .map(|i| {
            let c = if lattice {
                vec![rng.random_range(0..3) as f64, rng.random_range(0..3) as f64]
            } else {
                vec![rng.random::<f64>() * 4.0, rng.random::<f64>() * 4.0]
            };
            Point::new(id0 + i as u64, c, id0 + i as u64)
        })
        .collect()
}

/// Random `(A, B, C, k)` triples with `|A ∪ B ∪ C| <= 15`, `k <= 3`, checked in
/// both distance modes. Half the triples live on a 3×3 lattice so that the
/// hypotheses hold often enough to matter.
pub fn smoothness_suite(triples: usize, seed: u64, beta: f64, gamma: f64) -> anyhow::Result<SmoothnessSuite> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SmoothnessSuite {
        triples,
        checks: 0,
        hypotheses_met: 0,
        exhaustive_maps: 0,
        violations: 0,
        counterexample_excluded: true,
    };
    for t in 0..triples {
        let lattice = t % 2 == 0;
        let na = rng.random_range(0..=5);
        let nb = rng.random_range(1..=6);
        let nc = rng.random_range(0..=15 - na - nb);
        let a = random_set(&mut rng, na, 0, lattice);
        let b = random_set(&mut rng, nb, 100, lattice);
        let c = random_set(&mut rng, nc, 200, lattice);
        let k = 1 + t % 3;
        for mode in MODES {
            let r = check_smoothness_bound(&a, &b, &c, k, mode, beta, gamma)?;
            out.checks += 1;
            out.hypotheses_met += r.hypotheses_met() as usize;
            out.exhaustive_maps += (r.map_search == MapSearch::Exhaustive) as usize;
            out.violations += r.violated() as usize;
        }
    }
    let p = |c: [f64; 2], id: u64| Point::new(id, c.to_vec(), id);
    let (a, b, c) = (
        vec![p([0.0, 0.0], 1)],
        vec![p([1.0, 0.0], 2), p([1.0, 0.0], 3)],
        vec![p([5.0, 0.0], 4)],
    );
    for mode in MODES {
        let r = check_smoothness_bound(&a, &b, &c, 2, mode, beta, gamma)?;
        out.counterexample_excluded &= !r.cardinality_hypothesis && !r.bound_holds && !r.violated();
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CoresetInstance {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub eps: f64,
    pub coreset_size: usize,
    pub max_error: f64,
    pub mean_error: f64,
    pub slack: SlackReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CoresetSuite {
    pub technique: Technique,
    pub instances: Vec<CoresetInstance>,
    /// Largest `error / eps` seen.
    pub worst_relative: f64,
}

impl CoresetSuite {
    pub fn passed(&self) -> bool {
        self.instances
            .iter()
            .all(|i| i.max_error <= 1.5 * i.eps && i.slack.passes())
    }
}

/// Blobs plus uniform noise in `[0, 1]^d`.
pub fn blob_instance(rng: &mut ChaCha8Rng, n: usize, d: usize, blobs: usize) -> Vec<WeightedPoint<f64>> {
    let means: Vec<Vec<f64>> = (0..blobs).map(|_| (0..d).map(|_| rng.random()).collect()).collect();
    let noise = Normal::new(0.0, 0.05).expect("fixed");
    (0..n)
        .map(|i| {
            let c: Vec<f64> = if i % 5 == 4 {
                (0..d).map(|_| rng.random()).collect()
            } else {
                means[i % blobs].iter().map(|m| m + noise.sample(rng)).collect()
            };
            WeightedPoint::unit(Point::new(i as u64 + 1, c, i as u64 + 1))
        })
        .collect()
}

/// `instances` random instances (`n <= 500`, `d <= 3`, `k <= 3`, eps in
/// {0.1, 0.2}), each against `center_sets` random center sets, plus the
/// slack perturbation check at the construction's own fraction.
pub fn coreset_suite(technique: Technique, instances: usize, center_sets: usize, seed: u64) -> anyhow::Result<CoresetSuite> {
    coreset_suite_with(technique, instances, center_sets, seed, None)
}

/// As [`coreset_suite`]; with `reduced_c_vc` set, the ε-sample constant is
/// replaced and the per-region floor dropped, so that regions are actually
/// subsampled at this input size.
pub fn coreset_suite_with(
    technique: Technique,
    instances: usize,
    center_sets: usize,
    seed: u64,
    reduced_c_vc: Option<f64>,
) -> anyhow::Result<CoresetSuite> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(instances);
    for t in 0..instances {
        let n = rng.random_range(100..=500);
        let d = 1 + t % 3;
        let k = 1 + (t / 3) % 3;
        let eps = if t % 2 == 0 { 0.1 } else { 0.2 };
        let mode = if t % 4 < 2 { DistanceMode::Euclidean } else { DistanceMode::SquaredEuclidean };
        let points = blob_instance(&mut rng, n, d, k.max(2));
        let params = CoresetParams::new(technique, eps, 0.1);
        let inst_seed = rng.random();
        let core = match reduced_c_vc {
            None => build_coreset(&points, k, &params, mode, inst_seed)?,
            Some(c) => {
                let params = params.with_c_vc(c);
                let parts = build_partition(&points, k, &params, mode, inst_seed)?;
                unified_sample(&points, parts, k, &params, |_| 1, inst_seed ^ 1)?
            }
        };
        let mut errs = Vec::with_capacity(center_sets);
        for _ in 0..center_sets {
            let c = random_centers(&points, k, &mut rng)?;
            errs.push(coreset_cost_error(&points, &core, &c, mode)?);
        }
        let slack = slack_perturbation_check(&points, k, &params, mode, 50, inst_seed, None)?;
        out.push(CoresetInstance {
            n,
            d,
            k,
            eps,
            coreset_size: core.len(),
            max_error: errs.iter().copied().fold(0.0, f64::max),
            mean_error: errs.iter().sum::<f64>() / errs.len().max(1) as f64,
            slack,
        });
    }
    let worst_relative = out.iter().map(|i| i.max_error / i.eps).fold(0.0, f64::max);
    Ok(CoresetSuite {
        technique,
        instances: out,
        worst_relative,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DensityRun {
    pub seed: u64,
    pub top_level: u32,
    pub max_density_error: f64,
    pub max_cost_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MergeReduceSuite {
    pub n: u64,
    pub leaf_capacity: usize,
    pub eps: f64,
    pub runs: Vec<DensityRun>,
}

impl MergeReduceSuite {
    pub fn passed(&self) -> bool {
        self.runs
            .iter()
            .all(|r| r.max_density_error <= self.eps * self.n as f64 && r.max_cost_error <= self.eps)
    }
}

/// Density of the top bucket's regions against the raw points located in
/// them, and end-to-end coreset error, over `seeds` uniform streams.
pub fn merge_reduce_suite(
    n: u64,
    leaf_capacity: usize,
    eps: f64,
    seeds: usize,
    center_sets: usize,
    seed: u64,
) -> anyhow::Result<MergeReduceSuite> {
    let mut runs = Vec::with_capacity(seeds);
    for s in 0..seeds as u64 {
        let run_seed = seed.wrapping_add(s);
        let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
        let cfg = MergeReduceConfig::new(2, DistanceMode::Euclidean, CoresetParams::new(Technique::Hpm, eps, 0.1), n)
            .with_leaf_capacity(leaf_capacity)
            .with_seed(run_seed);
        let mut mr = MergeReduce::<f64>::new(cfg)?;
        let mut raw = Vec::with_capacity(n as usize);
        for i in 1..=n {
            let p = Point::new(i, vec![rng.random(), rng.random()], i);
            mr.insert(&p)?;
            raw.push(WeightedPoint::unit(p));
        }
        let (top_level, top) = mr.buckets().next().ok_or_else(|| anyhow::anyhow!("no bucket after {n} points"))?;
        let mut max_density: f64 = 0.0;
        for part in &top.partitions {
            for region in &part.regions {
                let exact = raw
                    .iter()
                    .filter(|p| part.locate(p.coords()).is_some_and(|r| r.id == region.id))
                    .count() as f64;
                let sampled: f64 = top
                    .points
                    .iter()
                    .filter(|q| q.region == region.id)
                    .map(|q| q.point.weight)
                    .sum();
                max_density = max_density.max((exact - sampled).abs());
            }
        }
        let core = mr.coreset()?;
        let mut max_cost: f64 = 0.0;
        for _ in 0..center_sets {
            let c = random_centers(&raw, 2, &mut rng)?;
            max_cost = max_cost.max(coreset_cost_error(&raw, &core, &c, DistanceMode::Euclidean)?);
        }
        runs.push(DensityRun {
            seed: run_seed,
            top_level,
            max_density_error: max_density,
            max_cost_error: max_cost,
        });
    }
    Ok(MergeReduceSuite {
        n,
        leaf_capacity,
        eps,
        runs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EpsSampleSuite {
    pub population: usize,
    pub report: EpsSampleReport,
    pub required_rate: f64,
}

impl EpsSampleSuite {
    pub fn passed(&self) -> bool {
        self.report.success_rate() >= self.required_rate
    }
}

/// Uniform samples from `population` points in the unit square, checked on
/// every box of a 6×6 lattice.
pub fn eps_sample_suite(population: usize, eps: f64, delta: f64, trials: usize, seed: u64) -> anyhow::Result<EpsSampleSuite> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pop: Vec<Vec<f64>> = (0..population).map(|_| vec![rng.random(), rng.random()]).collect();
    // boxes in the plane have VC dimension 4
    let report = eps_sample_trials(&pop, 4.0, eps, delta, 6, trials, seed ^ 1)?;
    Ok(EpsSampleSuite {
        population,
        report,
        required_rate: 1.0 - delta,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VerifyReport {
    pub version: u32,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smoothness: Option<SmoothnessSuite>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub coreset: Vec<CoresetSuite>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub merge_reduce: Option<MergeReduceSuite>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_sample: Option<EpsSampleSuite>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.smoothness.as_ref().is_none_or(SmoothnessSuite::passed)
            && self.coreset.iter().all(CoresetSuite::passed)
            && self.merge_reduce.as_ref().is_none_or(MergeReduceSuite::passed)
            && self.eps_sample.as_ref().is_none_or(EpsSampleSuite::passed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    All,
    Smoothness,
    Slack,
    MergeReduce,
    EpsSample,
}

pub fn run_verify(suite: Suite, seed: u64) -> anyhow::Result<VerifyReport> {
    let want = |s: Suite| suite == Suite::All || suite == s;
    let mut report = VerifyReport {
        version: crate::experiment::REPORT_VERSION,
        seed,
        smoothness: None,
        coreset: Vec::new(),
        merge_reduce: None,
        eps_sample: None,
    };
    if want(Suite::Smoothness) {
        report.smoothness = Some(smoothness_suite(200, seed, 2.0, 8.0)?);
    }
    if want(Suite::Slack) {
        for t in [Technique::Hpm, Technique::Chen] {
            report.coreset.push(coreset_suite(t, 20, 100, seed)?);
        }
    }
    if want(Suite::MergeReduce) {
        report.merge_reduce = Some(merge_reduce_suite(256, 8, 0.4, 20, 50, seed)?);
    }
    if want(Suite::EpsSample) {
        report.eps_sample = Some(eps_sample_suite(10_000, 0.2, 0.1, 100, seed)?);
    }
    Ok(report)
}
