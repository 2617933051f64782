//! Finite-support offspring laws.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Offspring distribution `p_0, ..., p_kmax`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct OffspringLaw {
    probs: Vec<f64>,
    cumulative: Vec<f64>,
    mean: f64,
}

impl OffspringLaw {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidLaw("no probabilities given"));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidLaw("probabilities must be finite and non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidLaw("probabilities must sum to 1"));
        }
        let mut cumulative = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cumulative.push(acc);
        }
        // the last non-zero entry absorbs rounding so sampling never runs off the end
        let last = probs.iter().rposition(|p| *p > 0.0).unwrap_or(0);
        for c in cumulative.iter_mut().skip(last) {
            *c = 1.0;
        }
        let mean = probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        Ok(Self {
            probs,
            cumulative,
            mean,
        })
    }

    /// Always two children.
    pub fn binary() -> Self {
        Self::degenerate(2)
    }

    /// Always exactly `k` children.
    pub fn degenerate(k: usize) -> Self {
        let mut probs = alloc::vec![0.0; k + 1];
        probs[k] = 1.0;
        Self::new(probs).expect("point mass is a valid law")
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn max_offspring(&self) -> usize {
        self.probs.len() - 1
    }

    /// Size-biased law `k p_k / mu`.
    pub fn size_biased(&self) -> Result<Self> {
        if self.mean <= 0.0 {
            return Err(Error::InvalidLaw("size-biasing needs a positive mean"));
        }
        let probs = self
            .probs
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p / self.mean)
            .collect::<Vec<_>>();
        let total: f64 = probs.iter().sum();
        Self::new(probs.into_iter().map(|p| p / total).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cumulative.partition_point(|c| *c <= u).min(self.max_offspring())
    }
}

impl TryFrom<Vec<f64>> for OffspringLaw {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Self::new(probs)
    }
}

impl From<OffspringLaw> for Vec<f64> {
    fn from(law: OffspringLaw) -> Self {
        law.probs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frequencies(law: &OffspringLaw, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = alloc::vec![0usize; law.max_offspring() + 1];
        for _ in 0..n {
            counts[law.sample(&mut rng)] += 1;
        }
        counts.into_iter().map(|c| c as f64 / n as f64).collect()
    }

    #[test]
    fn rejects_bad_laws() {
        assert!(OffspringLaw::new(alloc::vec![]).is_err());
        assert!(OffspringLaw::new(alloc::vec![0.5, 0.6]).is_err());
        assert!(OffspringLaw::new(alloc::vec![-0.1, 1.1]).is_err());
    }

    #[test]
    fn mean_and_support() {
        let law = OffspringLaw::new(alloc::vec![0.25, 0.0, 0.5, 0.25]).unwrap();
        assert!((law.mean() - 1.75).abs() < 1e-15);
        assert_eq!(OffspringLaw::binary().mean(), 2.0);
    }

    #[test]
    fn size_biased_examples() {
        let binary = OffspringLaw::binary().size_biased().unwrap();
        assert_eq!(binary.probs()[2], 1.0);

        let odd = OffspringLaw::new(alloc::vec![0.0, 0.5, 0.0, 0.5]).unwrap();
        let sb = odd.size_biased().unwrap();
        assert!((sb.probs()[1] - 0.25).abs() < 1e-15);
        assert!((sb.probs()[3] - 0.75).abs() < 1e-15);

        let mut probs = alloc::vec![0.0; 11];
        probs[0] = 0.9;
        probs[10] = 0.1;
        let heavy = OffspringLaw::new(probs).unwrap().size_biased().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_eq!(heavy.sample(&mut rng), 10);
        }

        assert!(OffspringLaw::degenerate(0).size_biased().is_err());
    }

    #[test]
    fn sampling_frequencies_within_four_sigma() {
        let n = 100_000;
        let laws = [
            OffspringLaw::new(alloc::vec![0.0, 0.5, 0.0, 0.5]).unwrap(),
            OffspringLaw::new(alloc::vec![0.2, 0.1, 0.4, 0.3]).unwrap(),
            OffspringLaw::binary(),
        ];
        for (i, law) in laws.iter().enumerate() {
            for target in [law.clone(), law.size_biased().unwrap()] {
                let freq = frequencies(&target, n, 11 + i as u64);
                for (k, p) in target.probs().iter().enumerate() {
                    let se = libm::sqrt(p * (1.0 - p) / n as f64).max(1e-12);
                    assert!((freq[k] - p).abs() <= 4.0 * se, "law {i} k={k}");
                }
            }
        }
    }
}
