//! Bias-corrected and accelerated (BCa) bootstrap for the mean.
//!
//! Replicate `b` draws `n` indices with `ChaCha8Rng::seed_from_u64(seed)`
//! via `random_range(0..n)`, in order, for `b = 0..B`. Its mean is
//! `sum(c_i * x_i) / n` over index multiplicities `c_i` in index order, so a
//! replicate that is a permutation of the sample ties the observed mean
//! exactly instead of differing by rounding. Quantiles use linear
//! interpolation at position `p * (B - 1)` of the sorted replicates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use super::{mean, StatsError};
use crate::model::{Interval, IntervalMethod};

/// Bootstrap distribution of the mean, reusable across confidence levels
/// so that nested levels give nested intervals.
#[derive(Debug, Clone)]
pub struct Bootstrap {
    observed: f64,
    /// Sorted replicate means; empty when every sample is identical.
    replicates: Vec<f64>,
    z0: Option<f64>,
    acceleration: f64,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

impl Bootstrap {
    pub fn new(samples: &[f64], resamples: usize, seed: u64) -> Result<Self, StatsError> {
        let n = samples.len();
        if n < 2 {
            return Err(StatsError::TooFewSamples { needed: 2, got: n });
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(StatsError::NonFinite);
        }
        if resamples < 2 {
            return Err(StatsError::InvalidConfig(format!(
                "resamples must be at least 2, got {resamples}"
            )));
        }
        let observed = mean(samples);
        if samples.iter().all(|&x| x == samples[0]) {
            return Ok(Self {
                observed: samples[0],
                replicates: Vec::new(),
                z0: None,
                acceleration: 0.0,
            });
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut replicates = Vec::with_capacity(resamples);
        let mut counts = vec![0u32; n];
        for _ in 0..resamples {
            counts.fill(0);
            for _ in 0..n {
                counts[rng.random_range(0..n)] += 1;
            }
            let sum: f64 = counts
                .iter()
                .zip(samples)
                .map(|(&c, &x)| f64::from(c) * x)
                .sum();
            replicates.push(sum / n as f64);
        }
        let below = replicates.iter().filter(|&&r| r < observed).count();
        replicates.sort_by(f64::total_cmp);

        let fraction = below as f64 / resamples as f64;
        let z0 = (below > 0 && below < resamples).then(|| std_normal().inverse_cdf(fraction));

        Ok(Self {
            observed,
            replicates,
            z0,
            acceleration: jackknife_acceleration(samples),
        })
    }

    pub fn observed(&self) -> f64 {
        self.observed
    }

    pub fn z0(&self) -> Option<f64> {
        self.z0
    }

    pub fn acceleration(&self) -> f64 {
        self.acceleration
    }

    /// Two-sided interval at `level` (e.g. 0.95).
    pub fn interval(&self, level: f64) -> Interval {
        if self.replicates.is_empty() {
            return Interval {
                lo: self.observed,
                hi: self.observed,
                method: IntervalMethod::Degenerate,
            };
        }
        let tail = (1.0 - level) / 2.0;
        let percentile = || Interval {
            lo: quantile(&self.replicates, tail),
            hi: quantile(&self.replicates, 1.0 - tail),
            method: IntervalMethod::PercentileFallback,
        };
        let Some(z0) = self.z0 else {
            return percentile();
        };
        let normal = std_normal();
        let adjust = |p: f64| -> Option<f64> {
            let z = z0 + normal.inverse_cdf(p);
            let denom = 1.0 - self.acceleration * z;
            (denom > 0.0)
                .then(|| normal.cdf(z0 + z / denom))
                .filter(|q| q.is_finite())
        };
        match (adjust(tail), adjust(1.0 - tail)) {
            (Some(a1), Some(a2)) => Interval {
                lo: quantile(&self.replicates, a1),
                hi: quantile(&self.replicates, a2),
                method: IntervalMethod::Bca,
            },
            _ => percentile(),
        }
    }
}

/// Acceleration from jackknife means: `Σd³ / (6 (Σd²)^1.5)` with
/// `d = mean(θ₍ᵢ₎) − θ₍ᵢ₎`; zero when the jackknife values do not vary.
fn jackknife_acceleration(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let total: f64 = samples.iter().sum();
    let leave_one_out: Vec<f64> = samples.iter().map(|x| (total - x) / (n - 1.0)).collect();
    let centre = mean(&leave_one_out);
    let (mut s2, mut s3) = (0.0, 0.0);
    for t in &leave_one_out {
        let d = centre - t;
        s2 += d * d;
        s3 += d * d * d;
    }
    if s2 == 0.0 {
        0.0
    } else {
        s3 / (6.0 * s2.powf(1.5))
    }
}

/// BCa interval for the mean of `samples`.
pub fn bca_ci(
    samples: &[f64],
    resamples: usize,
    seed: u64,
    level: f64,
) -> Result<Interval, StatsError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::InvalidConfig(format!(
            "level {level} outside (0, 1)"
        )));
    }
    Ok(Bootstrap::new(samples, resamples, seed)?.interval(level))
}
