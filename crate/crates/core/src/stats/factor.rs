//! Two-way additive model for off-diagonal switch effects:
//! `Δ(A→B) = μ + α_A + β_B + ε`, with `Σα = Σβ = 0`.
//!
//! Solved by least squares in a reduced parameterization where the last
//! model's α and β are minus the sum of the others. The diagonal is not
//! part of the fit, so α and β are not plain row/column means.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::StatsError;

/// K×K switch effects; `None` marks an unobserved cell. The diagonal is
/// ignored by every fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaMatrix {
    pub models: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl DeltaMatrix {
    pub fn new(models: Vec<String>, values: Vec<Vec<Option<f64>>>) -> Result<Self, StatsError> {
        let k = models.len();
        if values.len() != k || values.iter().any(|r| r.len() != k) {
            return Err(StatsError::Table(format!("expected a {k}x{k} matrix")));
        }
        if values.iter().flatten().flatten().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
        Ok(Self { models, values })
    }

    /// Builds a fully observed matrix from dense rows.
    pub fn dense(models: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self, StatsError> {
        Self::new(
            models,
            rows.into_iter()
                .map(|r| r.into_iter().map(Some).collect())
                .collect(),
        )
    }

    pub fn k(&self) -> usize {
        self.models.len()
    }

    /// Observed off-diagonal cells as `(prefix, suffix, value)`, row-major.
    pub fn off_diagonal(&self) -> Vec<(usize, usize, f64)> {
        let mut cells = Vec::new();
        for (a, row) in self.values.iter().enumerate() {
            for (b, v) in row.iter().enumerate() {
                if let (true, Some(v)) = (a != b, v) {
                    cells.push((a, b, *v));
                }
            }
        }
        cells
    }

    pub fn get(&self, prefix: &str, suffix: &str) -> Option<f64> {
        let a = self.models.iter().position(|m| m == prefix)?;
        let b = self.models.iter().position(|m| m == suffix)?;
        self.values[a][b]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub prefix: String,
    pub suffix: String,
    pub observed: f64,
    pub predicted: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    pub models: Vec<String>,
    pub mu: f64,
    /// Prefix influence, one per model, summing to zero.
    pub alpha: Vec<f64>,
    /// Suffix susceptibility, one per model, summing to zero.
    pub beta: Vec<f64>,
    /// `None` when the observed effects have no variance.
    pub r2_in_sample: Option<f64>,
    pub r2_loo: Option<f64>,
    /// Cells whose leave-one-out refit was not identifiable.
    #[serde(default)]
    pub loo_skipped: Vec<(String, String)>,
    pub residuals: Vec<Residual>,
}

impl FactorModel {
    pub fn predict(&self, a: usize, b: usize) -> f64 {
        self.mu + self.alpha[a] + self.beta[b]
    }

    pub fn alpha_of(&self, model: &str) -> Option<f64> {
        self.models
            .iter()
            .position(|m| m == model)
            .map(|i| self.alpha[i])
    }

    pub fn beta_of(&self, model: &str) -> Option<f64> {
        self.models
            .iter()
            .position(|m| m == model)
            .map(|i| self.beta[i])
    }

    pub fn residual(&self, prefix: &str, suffix: &str) -> Option<&Residual> {
        self.residuals
            .iter()
            .find(|r| r.prefix == prefix && r.suffix == suffix)
    }
}

/// Design row in the reduced parameterization: `[1, α_1..α_{K-1}, β_1..β_{K-1}]`.
fn design_row(a: usize, b: usize, k: usize) -> Vec<f64> {
    let mut x = vec![0.0; 2 * k - 1];
    x[0] = 1.0;
    let mut code = |offset: usize, idx: usize| {
        if idx + 1 == k {
            x[offset..offset + k - 1].iter_mut().for_each(|v| *v = -1.0);
        } else {
            x[offset + idx] = 1.0;
        }
    };
    code(1, a);
    code(k, b);
    x
}

/// Solves `m x = rhs` by Gaussian elimination with partial pivoting.
fn solve(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    let scale = m
        .iter()
        .enumerate()
        .map(|(i, r)| r[i].abs())
        .fold(0.0, f64::max)
        .max(1.0);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col].abs() <= 1e-10 * scale {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            if f == 0.0 {
                continue;
            }
            let (upper, lower) = m.split_at_mut(row);
            for (x, p) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                *x -= f * p;
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| m[row][c] * x[c]).sum();
        x[row] = (rhs[row] - s) / m[row][row];
    }
    Some(x)
}

struct Params {
    mu: f64,
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

fn least_squares(cells: &[(usize, usize, f64)], k: usize) -> Result<Params, StatsError> {
    let p = 2 * k - 1;
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for &(a, b, y) in cells {
        let x = design_row(a, b, k);
        for i in 0..p {
            if x[i] == 0.0 {
                continue;
            }
            xty[i] += x[i] * y;
            for j in 0..p {
                xtx[i][j] += x[i] * x[j];
            }
        }
    }
    let theta = solve(xtx, xty).ok_or_else(|| {
        StatsError::Unidentifiable(format!(
            "{} observed cells cannot determine {p} parameters",
            cells.len()
        ))
    })?;
    let expand = |slice: &[f64]| {
        let mut v = slice.to_vec();
        v.push(-slice.iter().sum::<f64>());
        v
    };
    Ok(Params {
        mu: theta[0],
        alpha: expand(&theta[1..k]),
        beta: expand(&theta[k..]),
    })
}

fn total_sum_of_squares(cells: &[(usize, usize, f64)]) -> f64 {
    let m = cells.iter().map(|c| c.2).sum::<f64>() / cells.len() as f64;
    cells.iter().map(|c| (c.2 - m).powi(2)).sum()
}

fn is_constant(cells: &[(usize, usize, f64)]) -> bool {
    cells.iter().all(|c| c.2 == cells[0].2)
}

/// Fits the additive model on observed off-diagonal cells. Leave-one-out
/// R² is left unset; see [`loo_cv_r2`] and [`analyze`].
pub fn fit_additive(matrix: &DeltaMatrix) -> Result<FactorModel, StatsError> {
    let k = matrix.k();
    if k < 3 {
        return Err(StatsError::TooFewModels { needed: 3, got: k });
    }
    let cells = matrix.off_diagonal();
    if cells.is_empty() {
        return Err(StatsError::Unidentifiable(
            "no observed off-diagonal cells".into(),
        ));
    }

    let (params, r2) = if is_constant(&cells) {
        let params = Params {
            mu: cells[0].2,
            alpha: vec![0.0; k],
            beta: vec![0.0; k],
        };
        (params, None)
    } else {
        let params = least_squares(&cells, k)?;
        let sse: f64 = cells
            .iter()
            .map(|&(a, b, y)| (y - (params.mu + params.alpha[a] + params.beta[b])).powi(2))
            .sum();
        (params, Some(1.0 - sse / total_sum_of_squares(&cells)))
    };

    let residuals = cells
        .iter()
        .map(|&(a, b, y)| {
            let predicted = params.mu + params.alpha[a] + params.beta[b];
            Residual {
                prefix: matrix.models[a].clone(),
                suffix: matrix.models[b].clone(),
                observed: y,
                predicted,
                epsilon: y - predicted,
            }
        })
        .collect();

    Ok(FactorModel {
        models: matrix.models.clone(),
        mu: params.mu,
        alpha: params.alpha,
        beta: params.beta,
        r2_in_sample: r2,
        r2_loo: None,
        loo_skipped: Vec::new(),
        residuals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooResult {
    /// `None` when the effects have no variance or every refit failed.
    pub r2: Option<f64>,
    pub skipped: Vec<(String, String)>,
    /// Out-of-sample prediction for each cell that could be refitted.
    pub predictions: Vec<Residual>,
}

/// Leave-one-out cross-validated R²: each off-diagonal cell is predicted
/// by a fit that excludes it.
pub fn loo_cv_r2(matrix: &DeltaMatrix) -> Result<LooResult, StatsError> {
    let k = matrix.k();
    if k < 3 {
        return Err(StatsError::TooFewModels { needed: 3, got: k });
    }
    let cells = matrix.off_diagonal();
    let mut skipped = Vec::new();
    let mut predictions = Vec::new();
    for (i, &(a, b, y)) in cells.iter().enumerate() {
        let rest: Vec<_> = cells
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, c)| *c)
            .collect();
        let fitted = if rest.is_empty() {
            None
        } else if is_constant(&rest) {
            Some(rest[0].2)
        } else {
            least_squares(&rest, k)
                .ok()
                .map(|p| p.mu + p.alpha[a] + p.beta[b])
        };
        match fitted {
            Some(predicted) => predictions.push(Residual {
                prefix: matrix.models[a].clone(),
                suffix: matrix.models[b].clone(),
                observed: y,
                predicted,
                epsilon: y - predicted,
            }),
            None => {
                log::warn!(
                    "leave-one-out refit without {}->{} is not identifiable; cell skipped",
                    matrix.models[a],
                    matrix.models[b]
                );
                skipped.push((matrix.models[a].clone(), matrix.models[b].clone()));
            }
        }
    }
    let r2 = if cells.is_empty() || is_constant(&cells) || predictions.is_empty() {
        None
    } else {
        let press: f64 = predictions.iter().map(|p| p.epsilon.powi(2)).sum();
        Some(1.0 - press / total_sum_of_squares(&cells))
    };
    Ok(LooResult {
        r2,
        skipped,
        predictions,
    })
}

/// Fit plus leave-one-out R² in one model.
pub fn analyze(matrix: &DeltaMatrix) -> Result<FactorModel, StatsError> {
    let mut model = fit_additive(matrix)?;
    let loo = loo_cv_r2(matrix)?;
    model.r2_loo = loo.r2;
    model.loo_skipped = loo.skipped;
    Ok(model)
}

/// The `k` largest residuals by |ε|, ties broken by (prefix, suffix).
pub fn top_residuals(model: &FactorModel, k: usize) -> Vec<Residual> {
    let mut ranked = model.residuals.clone();
    ranked.sort_by(|x, y| {
        y.epsilon
            .abs()
            .partial_cmp(&x.epsilon.abs())
            .unwrap_or(Ordering::Equal)
            .then_with(|| (&x.prefix, &x.suffix).cmp(&(&y.prefix, &y.suffix)))
    });
    ranked.truncate(k);
    ranked
}
