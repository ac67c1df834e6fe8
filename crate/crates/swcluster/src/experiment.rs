use std::collections::VecDeque;
use std::time::Instant;

use anyhow::Context;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use swcluster_core::coreset::{coreset_cost_error, random_centers};
use swcluster_core::offline::{brute_force_opt, local_search_kmedian};
use swcluster_core::sw_coreset::index_count_scale;
use swcluster_core::{
    cost, CoresetParams, DistanceMode, MergeReduceConfig, Point, SwCoreset, SwCoresetConfig, SwMedian,
    SwMedianConfig, WeightedPoint,
};

use crate::config::{ExperimentConfig, Pipeline};
use crate::generate::generate_stream;

pub const REPORT_VERSION: u32 = 1;
pub const RATIO_CONVENTION: &str = "ratio = queryCost / oracleCost, with 0/0 reported as 1";

/// Index-count soft limit and hard limit, as multiples of `s ε⁻² log₂ N`.
pub const INDEX_WARN_FACTOR: f64 = 4.0;
pub const INDEX_FAIL_FACTOR: f64 = 16.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StepReport {
    #[serde(rename = "N")]
    pub n: u64,
    pub index_count: usize,
    pub bucket_or_coreset_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    /// `OPT_k / OPT_{k-1}` of the window (k-means runs only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_squared: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_micros: Option<u64>,
}

impl StepReport {
    fn new(n: u64, index_count: usize, size: usize) -> Self {
        Self {
            n,
            index_count,
            bucket_or_coreset_size: size,
            query_cost: None,
            oracle_cost: None,
            ratio: None,
            sigma_squared: None,
            index_bound: None,
            query_error: None,
            wall_micros: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    /// Fails the run.
    Hard,
    /// Recorded only.
    Soft,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Violation {
    #[serde(rename = "N")]
    pub n: u64,
    pub kind: String,
    pub severity: Severity,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunSummary {
    pub steps: u64,
    pub oracle_checks: usize,
    pub max_ratio: Option<f64>,
    pub mean_ratio: Option<f64>,
    pub median_ratio: Option<f64>,
    pub max_index_count: usize,
    pub max_bucket_or_coreset_size: usize,
    pub max_query_error: Option<f64>,
    pub hard_violations: usize,
    pub soft_violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Report {
    pub version: u32,
    pub pipeline: Pipeline,
    pub config: ExperimentConfig,
    pub ratio_convention: String,
    pub summary: RunSummary,
    pub violations: Vec<Violation>,
    pub steps: Vec<StepReport>,
}

impl Report {
    pub fn hard_failures(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| v.severity == Severity::Hard)
    }

    pub fn passed(&self) -> bool {
        self.hard_failures().next().is_none()
    }

    pub fn to_json(&self) -> anyhow::Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.steps.iter().filter_map(|s| s.ratio).collect()
    }
}

struct Recorder {
    steps: Vec<StepReport>,
    violations: Vec<Violation>,
}

impl Recorder {
    fn flag(&mut self, n: u64, kind: &str, severity: Severity, detail: String) {
        self.violations.push(Violation {
            n,
            kind: kind.to_string(),
            severity,
            detail,
        });
    }
}

/// Runs the configured pipeline over the generated stream.
pub fn run_experiment(config: &ExperimentConfig, timings: bool) -> anyhow::Result<Report> {
    config.validate()?;
    let stream = generate_stream(config)?;
    anyhow::ensure!(!stream.is_empty(), "stream is empty");
    let mut rec = Recorder {
        steps: Vec::with_capacity(stream.len()),
        violations: Vec::new(),
    };
    match config.pipeline {
        Pipeline::Kmedian => run_kmedian(config, &stream, timings, &mut rec)?,
        Pipeline::Coreset => run_coreset(config, &stream, timings, &mut rec)?,
    }
    let summary = summarize(&rec);
    Ok(Report {
        version: REPORT_VERSION,
        pipeline: config.pipeline,
        config: config.clone(),
        ratio_convention: RATIO_CONVENTION.to_string(),
        summary,
        violations: rec.violations,
        steps: rec.steps,
    })
}

fn summarize(rec: &Recorder) -> RunSummary {
    let mut ratios: Vec<f64> = rec.steps.iter().filter_map(|s| s.ratio).collect();
    ratios.sort_by(f64::total_cmp);
    let median = (!ratios.is_empty()).then(|| {
        let m = ratios.len() / 2;
        if ratios.len() % 2 == 1 {
            ratios[m]
        } else {
            (ratios[m - 1] + ratios[m]) / 2.0
        }
    });
    RunSummary {
        steps: rec.steps.len() as u64,
        oracle_checks: rec.steps.iter().filter(|s| s.oracle_cost.is_some() || s.query_error.is_some()).count(),
        max_ratio: ratios.last().copied(),
        mean_ratio: (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64),
        median_ratio: median,
        max_index_count: rec.steps.iter().map(|s| s.index_count).max().unwrap_or(0),
        max_bucket_or_coreset_size: rec.steps.iter().map(|s| s.bucket_or_coreset_size).max().unwrap_or(0),
        max_query_error: rec.steps.iter().filter_map(|s| s.query_error).reduce(f64::max),
        hard_violations: rec.violations.iter().filter(|v| v.severity == Severity::Hard).count(),
        soft_violations: rec.violations.iter().filter(|v| v.severity == Severity::Soft).count(),
    }
}

fn structure_seed(seed: u64) -> u64 {
    seed ^ 0x5DEE_CE66_D1CE_4E5B
}

fn ratio(query: f64, oracle: f64) -> Option<f64> {
    if oracle > 0.0 {
        Some(query / oracle)
    } else if query == 0.0 {
        Some(1.0)
    } else {
        None
    }
}

/// Smallest nonzero distance between window points, if any two differ.
fn min_pairwise(points: &[WeightedPoint<f64>], mode: DistanceMode) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            let d = mode.eval(p.coords(), q.coords());
            if d > 0.0 && best.is_none_or(|b| d < b) {
                best = Some(d);
            }
        }
    }
    best
}

/// `8 k (1 + log₂ N)(1 + log₂(OPT′ + 2))`.
pub fn index_bound(k: usize, n: u64, opt_prime: f64) -> f64 {
    8.0 * k as f64 * (1.0 + (n as f64).log2()) * (1.0 + (opt_prime + 2.0).log2())
}

fn run_kmedian(cfg: &ExperimentConfig, stream: &[Vec<f64>], timings: bool, rec: &mut Recorder) -> anyhow::Result<()> {
    let sw_cfg = SwMedianConfig::new(cfg.window, cfg.k, cfg.mode)
        .with_beta_gamma(cfg.beta, cfg.gamma)
        .with_seed(structure_seed(cfg.seed));
    let mut sw = SwMedian::<f64>::new(sw_cfg)?;
    let mut window: VecDeque<WeightedPoint<f64>> = VecDeque::new();
    for (i, coords) in stream.iter().enumerate() {
        let n = i as u64 + 1;
        let started = Instant::now();
        let p = Point::new(n, coords.clone(), n);
        sw.insert(&p).with_context(|| format!("step {n}"))?;
        let q = sw.query().with_context(|| format!("query at step {n}"))?;
        let elapsed = started.elapsed();
        window.push_back(WeightedPoint::unit(p));
        if window.len() as u64 > cfg.window {
            window.pop_front();
        }
        let win = window.make_contiguous();
        let mut step = StepReport::new(n, sw.index_count(), sw.bucket_count());
        if timings {
            step.wall_micros = Some(elapsed.as_micros() as u64);
        }
        if !sw.sandwich_holds() {
            rec.flag(n, "sandwich", Severity::Hard, format!("indices {:?}", sw.indices()));
        }
        let query_cost = cost(win, &q.centers, cfg.mode)?;
        step.query_cost = Some(query_cost);

        if cfg.exact_oracle() && n.is_multiple_of(cfg.oracle_every) {
            let opt = brute_force_opt(win, cfg.k, cfg.mode)?.1;
            step.oracle_cost = Some(opt);
            step.ratio = ratio(query_cost, opt);
            let sigma2 = (cfg.mode == DistanceMode::SquaredEuclidean && cfg.k >= 2)
                .then(|| brute_force_opt(win, cfg.k - 1, cfg.mode).map(|r| r.1))
                .transpose()?
                .map(|prev| if prev > 0.0 { opt / prev } else { 0.0 });
            step.sigma_squared = sigma2;
            match step.ratio {
                None => rec.flag(n, "unbounded_ratio", Severity::Hard, format!("query cost {query_cost} with zero optimum")),
                Some(r) if r < 1.0 - 1e-9 => {
                    rec.flag(n, "ratio_below_one", Severity::Hard, format!("ratio {r}"))
                }
                Some(r) if r > cfg.ratio_cap() => {
                    let unseparable = sigma2.is_some_and(|s| s > cfg.sigma_threshold);
                    let severity = if unseparable { Severity::Soft } else { Severity::Hard };
                    rec.flag(n, "ratio_above_cap", severity, format!("ratio {r}, sigma^2 {sigma2:?}"));
                }
                _ => {}
            }
            let opt_prime = min_pairwise(win, cfg.mode).map_or(0.0, |m| opt / m);
            let bound = index_bound(cfg.k, n, opt_prime);
            step.index_bound = Some(bound);
            if sw.index_count() as f64 > bound {
                rec.flag(n, "index_bound", Severity::Hard, format!("T = {} > {bound}", sw.index_count()));
            }
        }
        rec.steps.push(step);
    }
    Ok(())
}

fn run_coreset(cfg: &ExperimentConfig, stream: &[Vec<f64>], timings: bool, rec: &mut Recorder) -> anyhow::Result<()> {
    let params = CoresetParams::new(cfg.technique, cfg.eps, cfg.delta);
    let mut mr = MergeReduceConfig::new(cfg.k, cfg.mode, params, stream.len() as u64).with_seed(structure_seed(cfg.seed));
    mr.leaf_capacity = cfg.leaf_capacity;
    let mut sw = SwCoreset::<f64>::new(SwCoresetConfig::new(cfg.window, mr))?;
    let mut window: VecDeque<WeightedPoint<f64>> = VecDeque::new();
    for (i, coords) in stream.iter().enumerate() {
        let n = i as u64 + 1;
        let started = Instant::now();
        let p = Point::new(n, coords.clone(), n);
        sw.insert(&p).with_context(|| format!("step {n}"))?;
        let core = sw.query().with_context(|| format!("query at step {n}"))?;
        let elapsed = started.elapsed();
        window.push_back(WeightedPoint::unit(p));
        if window.len() as u64 > cfg.window {
            window.pop_front();
        }
        let win = window.make_contiguous();
        let mut step = StepReport::new(n, sw.index_count(), core.len());
        if timings {
            step.wall_micros = Some(elapsed.as_micros() as u64);
        }
        if !sw.sandwich_holds() {
            rec.flag(n, "sandwich", Severity::Hard, format!("indices {:?}", sw.indices()));
        }
        let scale = index_count_scale(core.len(), cfg.eps, n);
        step.index_bound = Some(INDEX_FAIL_FACTOR * scale);
        let t = sw.index_count() as f64;
        if t > INDEX_FAIL_FACTOR * scale {
            rec.flag(n, "index_bound", Severity::Hard, format!("t = {t} > {}", INDEX_FAIL_FACTOR * scale));
        } else if t > INDEX_WARN_FACTOR * scale {
            rec.flag(n, "index_bound", Severity::Soft, format!("t = {t} > {}", INDEX_WARN_FACTOR * scale));
        }

        if cfg.oracle_every > 0 && n.is_multiple_of(cfg.oracle_every) {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9E37_79B9).wrapping_add(n));
            let mut worst: f64 = 0.0;
            for _ in 0..cfg.center_sets {
                let c = random_centers(win, cfg.k, &mut rng)?;
                worst = worst.max(coreset_cost_error(win, &core, &c, cfg.mode)?);
            }
            step.query_error = Some(worst);
            if worst > 3.0 * cfg.eps {
                rec.flag(n, "query_error", Severity::Hard, format!("error {worst} > {}", 3.0 * cfg.eps));
            }
            let centers = local_search_kmedian(&core.weighted_points(), cfg.k, cfg.mode, structure_seed(n))?;
            let query_cost = cost(win, &centers, cfg.mode)?;
            step.query_cost = Some(query_cost);
            if cfg.exact_oracle() {
                let opt = brute_force_opt(win, cfg.k, cfg.mode)?.1;
                step.oracle_cost = Some(opt);
                step.ratio = ratio(query_cost, opt);
            }
        }
        rec.steps.push(step);
    }
    Ok(())
}
