//! Seeded parameter-space sampling.
//!
//! All schemes draw from ChaCha20 (`rand_chacha::ChaCha20Rng`) seeded with
//! `seed_from_u64(seed)`, so a sample set is fully determined by
//! `(space, scheme, N, seed)`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{Density, ParameterSpace};

pub const RNG_ALGORITHM: &str = "chacha20";
const MAX_REJECTIONS_PER_POINT: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleScheme {
    Lhs,
    UniformIid,
    GaussianIid,
}

impl SampleScheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            SampleScheme::Lhs => "lhs",
            SampleScheme::UniformIid => "uniform-iid",
            SampleScheme::GaussianIid => "gaussian-iid",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lhs" => Ok(SampleScheme::Lhs),
            "uniform-iid" | "uniform" => Ok(SampleScheme::UniformIid),
            "gaussian-iid" | "gaussian" => Ok(SampleScheme::GaussianIid),
            other => Err(Error::InvalidArgument(format!("unknown sampling scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    /// N rows of n raw coordinates.
    pub points: Vec<Vec<f64>>,
    pub scheme: SampleScheme,
    pub seed: u64,
    pub space: ParameterSpace,
    /// Fraction of Gaussian draws that landed inside the box.
    pub acceptance_rate: Option<f64>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn sample(space: &ParameterSpace, scheme: SampleScheme, count: usize, seed: u64) -> Result<SampleSet> {
    if count < 2 {
        return Err(Error::TooSmallSample { min: 2, got: count });
    }
    let n = space.dim();
    let lo = space.lower();
    let hi = space.upper();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut points = vec![vec![0.0; n]; count];
    let mut acceptance_rate = None;

    match scheme {
        SampleScheme::UniformIid => {
            for p in points.iter_mut() {
                for j in 0..n {
                    let u: f64 = rng.random();
                    p[j] = lo[j] + u * (hi[j] - lo[j]);
                }
            }
        }
        SampleScheme::Lhs => {
            let mut strata: Vec<usize> = (0..count).collect();
            for j in 0..n {
                strata.sort_unstable();
                strata.shuffle(&mut rng);
                for (i, p) in points.iter_mut().enumerate() {
                    let u: f64 = rng.random();
                    let frac = (strata[i] as f64 + u) / count as f64;
                    // Keep the point inside its stratum despite rounding.
                    p[j] = (lo[j] + frac * (hi[j] - lo[j])).min(hi[j]);
                }
            }
        }
        SampleScheme::GaussianIid => {
            let Density::Gaussian { mean, stdev } = space.density() else {
                return Err(Error::InvalidArgument("gaussian sampling requires a gaussian density".into()));
            };
            let dists: Vec<Normal<f64>> = mean
                .iter()
                .zip(stdev)
                .map(|(m, s)| Normal::new(*m, *s).map_err(|e| Error::InvalidArgument(e.to_string())))
                .collect::<Result<_>>()?;
            let mut draws = 0usize;
            for p in points.iter_mut() {
                let mut tries = 0;
                loop {
                    draws += 1;
                    tries += 1;
                    for j in 0..n {
                        p[j] = dists[j].sample(&mut rng);
                    }
                    if space.contains(p) {
                        break;
                    }
                    if tries >= MAX_REJECTIONS_PER_POINT {
                        return Err(Error::InvalidArgument(
                            "gaussian density places almost no mass inside the bounds".into(),
                        ));
                    }
                }
            }
            acceptance_rate = Some(count as f64 / draws as f64);
        }
    }
    Ok(SampleSet { points, scheme, seed, space: space.clone(), acceptance_rate })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> ParameterSpace {
        ParameterSpace::new(vec!["a".into(), "b".into()], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn uniform_mean_near_half() {
        let s = sample(&square(), SampleScheme::UniformIid, 1000, 7).unwrap();
        for j in 0..2 {
            let mean: f64 = s.points.iter().map(|p| p[j]).sum::<f64>() / 1000.0;
            assert!((mean - 0.5).abs() < 0.05, "{mean}");
        }
    }

    #[test]
    fn lhs_one_point_per_stratum() {
        let space = ParameterSpace::new(vec!["a".into()], vec![0.0], vec![1.0]).unwrap();
        let s = sample(&space, SampleScheme::Lhs, 10, 3).unwrap();
        let mut hits = [0; 10];
        for p in &s.points {
            hits[((p[0] * 10.0).floor() as usize).min(9)] += 1;
        }
        assert_eq!(hits, [1; 10]);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = sample(&square(), SampleScheme::Lhs, 50, 11).unwrap();
        let b = sample(&square(), SampleScheme::Lhs, 50, 11).unwrap();
        let c = sample(&square(), SampleScheme::Lhs, 50, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.points, c.points);
    }

    #[test]
    fn gaussian_is_truncated_to_box() {
        let space = square()
            .with_density(Density::Gaussian { mean: vec![0.5, 0.9], stdev: vec![0.3, 0.3] })
            .unwrap();
        let s = sample(&space, SampleScheme::GaussianIid, 500, 5).unwrap();
        assert!(s.points.iter().all(|p| space.contains(p)));
        let rate = s.acceptance_rate.unwrap();
        assert!(rate > 0.1 && rate < 1.0);
        assert!(sample(&square(), SampleScheme::GaussianIid, 10, 5).is_err());
    }

    #[test]
    fn too_small() {
        assert_eq!(
            sample(&square(), SampleScheme::UniformIid, 1, 0).unwrap_err(),
            Error::TooSmallSample { min: 2, got: 1 }
        );
    }
}
