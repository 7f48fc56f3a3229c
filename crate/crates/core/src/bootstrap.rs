//! Poisson-bootstrap error propagation for scalar statistics of
//! coincidence matrices.
//!
//! Each observed count is treated as the mean of an independent Poisson
//! distribution. A replicate resamples every cell of every matrix jointly,
//! re-evaluates the statistic, and the replicate ensemble is summarized by
//! a Gaussian (mean, sigma) with a `sigma_multiplier`-wide interval.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::CoincidenceMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Number of bootstrap replicates.
    pub n_samples: usize,
    pub seed: u64,
    /// Half-width of the reported interval in standard deviations.
    pub sigma_multiplier: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            n_samples: 2000,
            seed: 0,
            sigma_multiplier: 3.0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 100 {
            return Err(Error::config("bootstrap needs at least 100 replicates"));
        }
        if self.sigma_multiplier <= 0.0 {
            return Err(Error::config("sigma multiplier must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub mean: f64,
    pub sigma: f64,
    /// `mean - k sigma, mean + k sigma` with k = sigma_multiplier.
    pub ci: (f64, f64),
    pub sigma_multiplier: f64,
    pub n_samples: usize,
    /// Replicates where the statistic failed; excluded from the summary.
    pub n_failed: usize,
}

/// Deterministic per-replicate seed derivation (splitmix64 over the pair),
/// so parallel evaluation order cannot change results.
pub(crate) fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_mul(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn resample(matrices: &[CoincidenceMatrix], rng: &mut ChaCha12Rng) -> Vec<CoincidenceMatrix> {
    matrices
        .iter()
        .map(|m| {
            let counts = m.counts().mapv(|c| {
                if c == 0 {
                    0
                } else {
                    Poisson::new(c as f64).expect("positive mean").sample(rng) as u64
                }
            });
            CoincidenceMatrix::new(counts, m.basis_pair(), m.duration_ps())
                .expect("resampled matrix keeps shape")
        })
        .collect()
}

/// Resample all matrices jointly per replicate, evaluate `statistic`, and
/// summarize. Replicates are independent and evaluated in parallel.
pub fn poisson_bootstrap<F>(
    matrices: &[CoincidenceMatrix],
    statistic: F,
    cfg: &BootstrapConfig,
) -> Result<BootstrapSummary>
where
    F: Fn(&[CoincidenceMatrix]) -> Result<f64> + Sync,
{
    cfg.validate()?;
    if matrices.is_empty() {
        return Err(Error::config("bootstrap needs at least one matrix"));
    }
    let values: Vec<Option<f64>> = (0..cfg.n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(cfg.seed, i));
            let replicate = resample(matrices, &mut rng);
            statistic(&replicate).ok()
        })
        .collect();

    let kept: Vec<f64> = values.iter().flatten().copied().collect();
    let n_failed = cfg.n_samples - kept.len();
    if kept.is_empty() {
        return Err(Error::numeric(
            "statistic failed on every bootstrap replicate",
        ));
    }
    let n = kept.len() as f64;
    let mean = kept.iter().sum::<f64>() / n;
    let var = kept.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    let sigma = var.sqrt();
    let k = cfg.sigma_multiplier;
    Ok(BootstrapSummary {
        mean,
        sigma,
        ci: (mean - k * sigma, mean + k * sigma),
        sigma_multiplier: k,
        n_samples: cfg.n_samples,
        n_failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::BasisPair;
    use ndarray::{array, Array2};

    fn cfg(n: usize, seed: u64) -> BootstrapConfig {
        BootstrapConfig {
            n_samples: n,
            seed,
            sigma_multiplier: 3.0,
        }
    }

    fn single_cell(count: u64) -> CoincidenceMatrix {
        let mut counts = Array2::<u64>::zeros((2, 2));
        counts[(0, 0)] = count;
        CoincidenceMatrix::new(counts, BasisPair::TT, 1).unwrap()
    }

    #[test]
    fn constant_statistic_has_zero_sigma() {
        let m = single_cell(100);
        let s = poisson_bootstrap(&[m], |_| Ok(7.5), &cfg(200, 1)).unwrap();
        assert_eq!(s.mean, 7.5);
        assert_eq!(s.sigma, 0.0);
        assert_eq!(s.n_failed, 0);
    }

    #[test]
    fn total_count_sigma_matches_poisson_variance() {
        let m = single_cell(10_000);
        let s = poisson_bootstrap(&[m], |ms| Ok(ms[0].total() as f64), &cfg(2000, 7)).unwrap();
        assert!(
            (s.sigma - 100.0).abs() / 100.0 < 0.05,
            "sigma = {}",
            s.sigma
        );
        assert!((s.mean - 10_000.0).abs() < 3.0 * 100.0 / (2000f64).sqrt() * 5.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let m = single_cell(500);
        let stat = |ms: &[CoincidenceMatrix]| Ok(ms[0].total() as f64);
        let a = poisson_bootstrap(std::slice::from_ref(&m), stat, &cfg(300, 11)).unwrap();
        let b = poisson_bootstrap(&[m], stat, &cfg(300, 11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_agree_within_combined_standard_errors() {
        let m = single_cell(2_000);
        let stat = |ms: &[CoincidenceMatrix]| Ok(ms[0].total() as f64);
        let a = poisson_bootstrap(std::slice::from_ref(&m), stat, &cfg(1000, 1)).unwrap();
        let b = poisson_bootstrap(&[m], stat, &cfg(1000, 2)).unwrap();
        let se = (a.sigma.powi(2) / 1000.0 + b.sigma.powi(2) / 1000.0).sqrt();
        assert!((a.mean - b.mean).abs() < 5.0 * se);
    }

    #[test]
    fn failed_replicates_are_excluded_and_counted() {
        let m = CoincidenceMatrix::new(array![[2u64, 0], [0, 2]], BasisPair::TT, 1).unwrap();
        // Fail whenever the resampled total is odd.
        let stat = |ms: &[CoincidenceMatrix]| {
            let t = ms[0].total();
            if t % 2 == 1 {
                Err(Error::numeric("odd"))
            } else {
                Ok(t as f64)
            }
        };
        let s = poisson_bootstrap(&[m], stat, &cfg(400, 3)).unwrap();
        assert!(s.n_failed > 0);
        assert!(s.n_failed < 400);
    }

    #[test]
    fn three_sigma_interval_covers_poisson_truth() {
        // Meta-trial coverage: draw an observed matrix from a known truth,
        // bootstrap a linear statistic, and check the 3-sigma interval
        // contains the truth in at least 99% of trials.
        use rand::SeedableRng;
        use rand_distr::{Distribution, Poisson};
        let truth_per_cell = 50.0;
        let d = 4;
        let truth_total = truth_per_cell * (d * d) as f64;
        let mut covered = 0;
        let trials = 500;
        for t in 0..trials {
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(0xC0FFEE, t));
            let pois = Poisson::new(truth_per_cell).unwrap();
            let counts = Array2::from_shape_fn((d, d), |_| pois.sample(&mut rng) as u64);
            let m = CoincidenceMatrix::new(counts, BasisPair::TT, 1).unwrap();
            let s = poisson_bootstrap(
                &[m],
                |ms| Ok(ms[0].total() as f64),
                &cfg(200, derive_seed(0xBEEF, t)),
            )
            .unwrap();
            if s.ci.0 <= truth_total && truth_total <= s.ci.1 {
                covered += 1;
            }
        }
        assert!(covered >= 495, "covered {covered}/500");
    }
}
