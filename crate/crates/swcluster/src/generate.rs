use std::f64::consts::PI;

use anyhow::Context;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use swcluster_core::io::read_points_file;

use crate::config::{ExperimentConfig, Generator};

fn circle_mean(c: usize, m: usize, d: usize) -> Vec<f64> {
    let angle = 2.0 * PI * c as f64 / m as f64;
    let mut mean = vec![0.0; d];
    mean[0] = 10.0 * angle.cos();
    if d > 1 {
        mean[1] = 10.0 * angle.sin();
    }
    mean
}

/// Coordinates of the configured stream, in arrival order.
pub fn generate_stream(config: &ExperimentConfig) -> anyhow::Result<Vec<Vec<f64>>> {
    config.validate()?;
    let (n, d) = (config.n as usize, config.d);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mixture = |rng: &mut ChaCha8Rng, m: usize, spread: f64, shift: &dyn Fn(usize) -> f64| {
        let noise = Normal::new(0.0, spread).expect("spread validated");
        (0..n)
            .map(|i| {
                let mut p = circle_mean(i % m, m, d);
                p[0] += shift(i);
                for x in &mut p {
                    *x += noise.sample(rng);
                }
                p
            })
            .collect::<Vec<_>>()
    };
    Ok(match &config.generator {
        Generator::UniformBox => (0..n).map(|_| (0..d).map(|_| rng.random()).collect()).collect(),
        Generator::GaussianMixture { m, spread } => mixture(&mut rng, *m, *spread, &|_| 0.0),
        Generator::Drift { m, period, spread } => {
            let (period, spread) = (*period as usize, *spread);
            mixture(&mut rng, *m, spread, &move |i| (i / period) as f64 * spread)
        }
        Generator::File { path } => {
            let pts: Vec<Vec<f64>> =
                read_points_file(path).with_context(|| format!("reading stream {}", path.display()))?;
            pts.into_iter().take(n).collect()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use swcluster_core::offline::brute_force_opt;
    use swcluster_core::{DistanceMode, Point, WeightedPoint};

    fn cfg(generator: Generator, n: u64) -> ExperimentConfig {
        ExperimentConfig {
            generator,
            n,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn uniform_is_deterministic() {
        let c = ExperimentConfig { seed: 1, ..cfg(Generator::UniformBox, 3) };
        let a = generate_stream(&c).unwrap();
        assert_eq!(a, generate_stream(&c).unwrap());
        assert_eq!(a.len(), 3);
        assert!(a.iter().flatten().all(|x| (0.0..1.0).contains(x)));
    }

    #[test]
    fn mixture_windows_are_tight() {
        let c = cfg(Generator::GaussianMixture { m: 2, spread: 0.1 }, 1000);
        let s = generate_stream(&c).unwrap();
        for start in [0usize, 337, 988] {
            let w: Vec<WeightedPoint<f64>> = s[start..start + 12]
                .iter()
                .enumerate()
                .map(|(i, x)| WeightedPoint::unit(Point::new(i as u64, x.clone(), i as u64)))
                .collect();
            let opt = brute_force_opt(&w, 2, DistanceMode::Euclidean).unwrap().1;
            // means sit 20 apart
            assert!(opt < 0.25 * 20.0, "opt {opt}");
        }
    }

    #[test]
    fn drift_moves_means() {
        let c = cfg(Generator::Drift { m: 1, period: 10, spread: 0.0 }, 30);
        let s = generate_stream(&c).unwrap();
        assert_eq!(s[0][0], 10.0);
        assert_eq!(s[10][0], 10.0);
        assert_eq!(s[29][0], 10.0);
        let c = cfg(Generator::Drift { m: 1, period: 10, spread: 0.5 }, 30);
        let s = generate_stream(&c).unwrap();
        let avg = |r: std::ops::Range<usize>| s[r.clone()].iter().map(|p| p[0]).sum::<f64>() / r.len() as f64;
        assert!(avg(20..30) - avg(0..10) > 0.4);
    }

    #[test]
    fn file_stream() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        std::fs::write(&path, "x,y\n1,2\n3,4\n5,6\n7,8\n9,10\n").unwrap();
        let c = ExperimentConfig { d: 2, ..cfg(Generator::File { path: path.clone() }, 100) };
        let s = generate_stream(&c).unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s[4], vec![9.0, 10.0]);
        std::fs::write(&path, "1,2\n3,x\n").unwrap();
        let err = generate_stream(&c).unwrap_err();
        assert!(format!("{err:#}").contains("line 2"), "{err:#}");
    }
}
