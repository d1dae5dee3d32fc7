//! Correlation of fitted factors across two tasks.

use serde::{Deserialize, Serialize};

use super::{factor::FactorModel, mean, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    PrefixAlpha,
    SuffixBeta,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMethod {
    #[default]
    Pearson,
    Spearman,
}

impl std::str::FromStr for CorrelationMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pearson" => Ok(Self::Pearson),
            "spearman" => Ok(Self::Spearman),
            other => Err(format!(
                "unknown correlation method `{other}` (pearson | spearman)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorCorrelation {
    pub kind: FactorKind,
    pub method: CorrelationMethod,
    pub rho: f64,
    /// Models present in both fits, in the first fit's order.
    pub models: Vec<String>,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::Undefined("a factor vector is constant".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Ranks starting at 1; ties share their average rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = avg;
        }
        i = j + 1;
    }
    out
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    pearson(&ranks(x), &ranks(y))
}

/// Correlates α (or β) between two fits over the models they share.
pub fn factor_correlation(
    first: &FactorModel,
    second: &FactorModel,
    kind: FactorKind,
    method: CorrelationMethod,
) -> Result<FactorCorrelation, StatsError> {
    let pick = |f: &FactorModel, m: &str| match kind {
        FactorKind::PrefixAlpha => f.alpha_of(m),
        FactorKind::SuffixBeta => f.beta_of(m),
    };
    let mut models = Vec::new();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for m in &first.models {
        if let (Some(a), Some(b)) = (pick(first, m), pick(second, m)) {
            models.push(m.clone());
            x.push(a);
            y.push(b);
        }
    }
    if models.len() < 3 {
        return Err(StatsError::TooFewModels {
            needed: 3,
            got: models.len(),
        });
    }
    let rho = match method {
        CorrelationMethod::Pearson => pearson(&x, &y)?,
        CorrelationMethod::Spearman => spearman(&x, &y)?,
    };
    Ok(FactorCorrelation {
        kind,
        method,
        rho,
        models,
    })
}
