//! Reference BCa interval written independently of the library: normal
//! functions from libm's erfc with an Acklam inverse refined by one Halley
//! step, replicate means from index multiplicities, type-7 quantiles. Only
//! the resampling stream (seeded ChaCha8, `random_range(0..n)`) is shared.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn phi_inv(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383_577_518_672_69e2,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let lower = 0.02425;
    let x = if p < lower {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - lower {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // Halley refinement to full double precision.
    let e = phi(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

/// Type-7 sample quantile.
pub fn type7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let (fl, ce) = (h.floor(), h.ceil());
    sorted[fl as usize] + (h - fl) * (sorted[ce as usize] - sorted[fl as usize])
}

pub fn reference_bca(x: &[f64], b: usize, seed: u64, level: f64) -> (f64, f64) {
    let n = x.len();
    let theta: f64 = x.iter().sum::<f64>() / n as f64;
    if x.iter().all(|v| *v == x[0]) {
        return (x[0], x[0]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reps = Vec::with_capacity(b);
    let mut counts = vec![0u32; n];
    for _ in 0..b {
        counts.iter_mut().for_each(|c| *c = 0);
        for _ in 0..n {
            counts[rng.random_range(0..n)] += 1;
        }
        let s: f64 = counts.iter().zip(x).map(|(&c, v)| c as f64 * v).sum();
        reps.push(s / n as f64);
    }
    let less = reps.iter().filter(|r| **r < theta).count();
    reps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let alpha = (1.0 - level) / 2.0;
    let pct = (type7(&reps, alpha), type7(&reps, 1.0 - alpha));
    if less == 0 || less == b {
        return pct;
    }
    let z0 = phi_inv(less as f64 / b as f64);

    let jack: Vec<f64> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i).map(|j| x[j]).sum::<f64>() / (n - 1) as f64)
        .collect();
    let jbar = jack.iter().sum::<f64>() / n as f64;
    let num: f64 = jack.iter().map(|t| (jbar - t).powi(3)).sum();
    let den: f64 = jack.iter().map(|t| (jbar - t).powi(2)).sum();
    let a = if den == 0.0 {
        0.0
    } else {
        num / (6.0 * den.powf(1.5))
    };

    let mut ends = [0.0; 2];
    for (slot, p) in ends.iter_mut().zip([alpha, 1.0 - alpha]) {
        let z = z0 + phi_inv(p);
        let d = 1.0 - a * z;
        if d <= 0.0 {
            return pct;
        }
        *slot = type7(&reps, phi(z0 + z / d));
    }
    (ends[0], ends[1])
}

/// Ten fixed datasets, sizes 5 to 200, continuous and binary.
pub fn datasets() -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let sizes = [5, 8, 12, 20, 35, 50, 75, 100, 150, 200];
    sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            (0..n)
                .map(|_| match i % 3 {
                    0 => rng.random::<f64>(),
                    1 => f64::from(rng.random_bool(0.35) as u8),
                    // Skewed continuous scores: many exact zeros.
                    _ => {
                        let u: f64 = rng.random();
                        if u < 0.3 {
                            0.0
                        } else {
                            u.powi(3)
                        }
                    }
                })
                .collect()
        })
        .collect()
}
