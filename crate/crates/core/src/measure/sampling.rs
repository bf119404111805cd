use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::DiscreteMeasure;
use crate::{Error, Result};

/// Synthetic laws for data generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum DistributionSpec {
    /// Uniform on the box `[low, high]`.
    Uniform { low: Vec<f64>, high: Vec<f64> },
    /// Independent normal coordinates.
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
    /// Finite mixture; weights are normalised.
    Mixture { components: Vec<MixtureComponent> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub dist: DistributionSpec,
}

impl DistributionSpec {
    pub fn standard_gaussian(dim: usize) -> Self {
        DistributionSpec::Gaussian {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn uniform_interval(low: f64, high: f64) -> Self {
        DistributionSpec::Uniform {
            low: vec![low],
            high: vec![high],
        }
    }

    /// Equal-weight mixture.
    pub fn even_mixture(parts: Vec<DistributionSpec>) -> Self {
        let w = 1.0 / parts.len().max(1) as f64;
        DistributionSpec::Mixture {
            components: parts
                .into_iter()
                .map(|dist| MixtureComponent { weight: w, dist })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<usize> {
        match self {
            DistributionSpec::Uniform { low, high } => {
                if low.is_empty() || low.len() != high.len() {
                    return Err(Error::InvalidParameter("uniform bounds must be nonempty and of equal length".into()));
                }
                if low.iter().zip(high).any(|(l, h)| !(l.is_finite() && h.is_finite() && l <= h)) {
                    return Err(Error::InvalidParameter("uniform requires finite low <= high".into()));
                }
                Ok(low.len())
            }
            DistributionSpec::Gaussian { mean, std } => {
                if mean.is_empty() || mean.len() != std.len() {
                    return Err(Error::InvalidParameter("gaussian mean/std must be nonempty and of equal length".into()));
                }
                if mean.iter().any(|m| !m.is_finite()) || std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                    return Err(Error::InvalidParameter("gaussian requires finite mean and std >= 0".into()));
                }
                Ok(mean.len())
            }
            DistributionSpec::Mixture { components } => {
                if components.is_empty() {
                    return Err(Error::InvalidParameter("empty mixture".into()));
                }
                let mut dim = None;
                for c in components {
                    if !(c.weight.is_finite() && c.weight >= 0.0) {
                        return Err(Error::InvalidParameter("mixture weights must be >= 0".into()));
                    }
                    let d = c.dist.validate()?;
                    if *dim.get_or_insert(d) != d {
                        return Err(Error::InvalidParameter("mixture components differ in dimension".into()));
                    }
                }
                if components.iter().map(|c| c.weight).sum::<f64>() <= 0.0 {
                    return Err(Error::InvalidParameter("mixture weights sum to zero".into()));
                }
                Ok(dim.unwrap_or(0))
            }
        }
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            DistributionSpec::Uniform { low, high } => low
                .iter()
                .zip(high)
                .map(|(l, h)| l + (h - l) * rng.random::<f64>())
                .collect(),
            DistributionSpec::Gaussian { mean, std } => mean
                .iter()
                .zip(std)
                .map(|(m, s)| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + s * z
                })
                .collect(),
            DistributionSpec::Mixture { components } => {
                let total: f64 = components.iter().map(|c| c.weight).sum();
                let mut u = rng.random::<f64>() * total;
                for c in components {
                    if u < c.weight {
                        return c.dist.sample_one(rng);
                    }
                    u -= c.weight;
                }
                let last = components.iter().rev().find(|c| c.weight > 0.0).unwrap_or(&components[0]);
                last.dist.sample_one(rng)
            }
        }
    }

    /// `n` i.i.d. draws as a uniform empirical measure.
    pub fn sample_measure(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<DiscreteMeasure> {
        self.validate()?;
        if n == 0 {
            return Err(Error::InvalidParameter("sample size must be positive".into()));
        }
        DiscreteMeasure::uniform((0..n).map(|_| self.sample_one(rng)).collect())
    }
}

/// Source of i.i.d. minibatches.
pub trait Sampler: Sync {
    fn dim(&self) -> usize;
    fn draw(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>>;
}

impl Sampler for DistributionSpec {
    fn dim(&self) -> usize {
        self.validate().unwrap_or(0)
    }

    fn draw(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }
}

/// Draws atoms with replacement according to the weights.
impl Sampler for DiscreteMeasure {
    fn dim(&self) -> usize {
        DiscreteMeasure::dim(self)
    }

    fn draw(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        let idx = WeightedIndex::new(self.weights()).expect("measure weights are valid");
        (0..n).map(|_| self.point(idx.sample(rng)).to_vec()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn mixture_samples_stay_in_support() {
        let spec = DistributionSpec::even_mixture(vec![
            DistributionSpec::uniform_interval(2.0, 4.0),
            DistributionSpec::uniform_interval(6.0, 8.0),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mu = spec.sample_measure(500, &mut rng).unwrap();
        let mut left = 0;
        for p in mu.points() {
            let v = p[0];
            assert!((2.0..=4.0).contains(&v) || (6.0..=8.0).contains(&v), "{v}");
            if v < 5.0 {
                left += 1;
            }
        }
        assert!((150..350).contains(&left));
    }

    #[test]
    fn seeded_draws_repeat() {
        let spec = DistributionSpec::standard_gaussian(2);
        let a = spec.sample_measure(50, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = spec.sample_measure(50, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn spec_json_is_tagged() {
        let spec = DistributionSpec::standard_gaussian(1);
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"kind\":\"gaussian\""));
        let back: DistributionSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn zero_size_and_bad_specs_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(DistributionSpec::standard_gaussian(2).sample_measure(0, &mut rng).is_err());
        let bad = DistributionSpec::Uniform { low: vec![1.0], high: vec![0.0] };
        assert!(bad.sample_measure(3, &mut rng).is_err());
    }

    #[test]
    fn discrete_draws_skip_zero_weight_atoms() {
        let mu = DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![0.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(mu.draw(100, &mut rng).iter().all(|p| p[0] == 1.0));
    }
}
