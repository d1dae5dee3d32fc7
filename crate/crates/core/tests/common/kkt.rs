//! Brute-force constrained least squares for the additive model. All 2K+1
//! parameters are kept and sum(alpha) = sum(beta) = 0 is imposed through
//! Lagrange multipliers: [X'X C'; C 0] [theta; lambda] = [X'y; 0], dense LU.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct Oracle {
    pub mu: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub r2: f64,
}

pub fn oracle(values: &[Vec<Option<f64>>]) -> Oracle {
    let k = values.len();
    let p = 2 * k + 1;
    let cells: Vec<(usize, usize, f64)> = (0..k)
        .flat_map(|a| (0..k).map(move |b| (a, b)))
        .filter(|(a, b)| a != b)
        .filter_map(|(a, b)| values[a][b].map(|y| (a, b, y)))
        .collect();
    let mut x = DMatrix::<f64>::zeros(cells.len(), p);
    let mut y = DVector::<f64>::zeros(cells.len());
    for (r, &(a, b, v)) in cells.iter().enumerate() {
        x[(r, 0)] = 1.0;
        x[(r, 1 + a)] = 1.0;
        x[(r, 1 + k + b)] = 1.0;
        y[r] = v;
    }
    let mut kkt = DMatrix::<f64>::zeros(p + 2, p + 2);
    kkt.view_mut((0, 0), (p, p))
        .copy_from(&(x.transpose() * &x));
    for i in 0..k {
        kkt[(p, 1 + i)] = 1.0;
        kkt[(1 + i, p)] = 1.0;
        kkt[(p + 1, 1 + k + i)] = 1.0;
        kkt[(1 + k + i, p + 1)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(p + 2);
    rhs.rows_mut(0, p).copy_from(&(x.transpose() * &y));
    let sol = kkt.lu().solve(&rhs).expect("KKT system is nonsingular");
    let theta = sol.rows(0, p).into_owned();
    let fitted = &x * &theta;
    let ybar = y.mean();
    let sse: f64 = (&y - &fitted).iter().map(|e| e * e).sum();
    let sst: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    Oracle {
        mu: theta[0],
        alpha: theta.rows(1, k).iter().copied().collect(),
        beta: theta.rows(1 + k, k).iter().copied().collect(),
        r2: 1.0 - sse / sst,
    }
}

pub struct Generated {
    pub values: Vec<Vec<Option<f64>>>,
    pub mu: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

fn centred(rng: &mut ChaCha8Rng, k: usize, scale: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(-scale..scale)).collect();
    let m = raw.iter().sum::<f64>() / k as f64;
    raw.iter().map(|v| v - m).collect()
}

pub fn generate(rng: &mut ChaCha8Rng, k: usize, noise: f64, missing: f64) -> Generated {
    let mu = rng.random_range(-0.05..0.05);
    let alpha = centred(rng, k, 0.05);
    let beta = centred(rng, k, 0.08);
    let values = (0..k)
        .map(|a| {
            (0..k)
                .map(|b| {
                    if a == b {
                        Some(0.0)
                    } else if rng.random_bool(missing) {
                        None
                    } else {
                        Some(mu + alpha[a] + beta[b] + noise * rng.random_range(-1.0..1.0))
                    }
                })
                .collect()
        })
        .collect();
    Generated {
        values,
        mu,
        alpha,
        beta,
    }
}

pub fn names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("m{i}")).collect()
}
