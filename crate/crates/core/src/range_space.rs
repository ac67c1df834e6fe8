//! Axis-aligned box ranges in the plane, for checking ε-sample quality.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coreset::eps_sample_size;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Closed box `[lo.0, hi.0] × [lo.1, hi.1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Box2 {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Box2 {
    pub fn contains<T: Scalar>(&self, p: &[T]) -> bool {
        (0..2).all(|t| {
            let x = p[t].as_f64();
            x >= self.lo[t] && x <= self.hi[t]
        })
    }
}

/// Every box with distinct corners on an `m × m` lattice spanning `[lo, hi]²`.
pub fn lattice_boxes(m: usize, lo: f64, hi: f64) -> Vec<Box2> {
    let step = (hi - lo) / (m.saturating_sub(1).max(1)) as f64;
    let ticks: Vec<f64> = (0..m).map(|i| lo + step * i as f64).collect();
    let mut out = Vec::new();
    for x0 in 0..m {
        for x1 in x0 + 1..m {
            for y0 in 0..m {
                for y1 in y0 + 1..m {
                    out.push(Box2 {
                        lo: [ticks[x0], ticks[y0]],
                        hi: [ticks[x1], ticks[y1]],
                    });
                }
            }
        }
    }
    out
}

/// `max_B | |P ∩ B| / |P| - |S ∩ B| / |S| |` over the boxes.
pub fn max_box_deviation<T: Scalar>(population: &[Vec<T>], sample: &[&[T]], boxes: &[Box2]) -> Result<f64> {
    if population.is_empty() || sample.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(p) = population.iter().find(|p| p.len() < 2) {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: p.len(),
        });
    }
    let (np, ns) = (population.len() as f64, sample.len() as f64);
    let mut worst: f64 = 0.0;
    for b in boxes {
        let a = population.iter().filter(|p| b.contains(p)).count() as f64 / np;
        let s = sample.iter().filter(|p| b.contains(p)).count() as f64 / ns;
        worst = worst.max((a - s).abs());
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsSampleReport {
    pub sample_size: u64,
    pub trials: usize,
    pub passed: usize,
    pub worst_deviation: f64,
    pub eps: f64,
    pub delta: f64,
}

impl EpsSampleReport {
    pub fn success_rate(&self) -> f64 {
        self.passed as f64 / self.trials as f64
    }
}

/// Draws `trials` uniform samples (without replacement) of the ε-sample size
/// from `population` and counts those within `eps` on every lattice box.
pub fn eps_sample_trials<T: Scalar>(
    population: &[Vec<T>],
    d_vc: f64,
    eps: f64,
    delta: f64,
    lattice: usize,
    trials: usize,
    seed: u64,
) -> Result<EpsSampleReport> {
    let size = eps_sample_size(d_vc, eps, delta, population.len() as u64)?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in population {
        for &x in p.iter().take(2) {
            lo = lo.min(x.as_f64());
            hi = hi.max(x.as_f64());
        }
    }
    let boxes = lattice_boxes(lattice, lo, hi);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut passed = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let idx = rand::seq::index::sample(&mut rng, population.len(), size as usize);
        let sample: Vec<&[T]> = idx.iter().map(|i| population[i].as_slice()).collect();
        let dev = max_box_deviation(population, &sample, &boxes)?;
        worst = worst.max(dev);
        if dev <= eps {
            passed += 1;
        }
    }
    Ok(EpsSampleReport {
        sample_size: size,
        trials,
        passed,
        worst_deviation: worst,
        eps,
        delta,
    })
}
