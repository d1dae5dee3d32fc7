//! Paired per-episode deltas against the suffix model's own baseline.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::bootstrap::Bootstrap;
use super::{mean, BootstrapConfig, StatsError};
use crate::model::{CellId, CellResult, Interval, StarLevel};

/// Per-episode differences `s(A->B, e) - s(B->B, e)` for one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedCell {
    pub cell: CellId,
    pub episode_ids: Vec<String>,
    pub deltas: Vec<f64>,
}

impl PairedCell {
    pub fn n(&self) -> usize {
        self.deltas.len()
    }

    pub fn delta(&self) -> f64 {
        mean(&self.deltas)
    }
}

/// Pairs switch results with diagonal results by episode id. Episodes
/// missing from either side are dropped from this cell only.
pub fn paired_deltas(
    switched: &[CellResult],
    baseline: &[CellResult],
) -> Result<PairedCell, StatsError> {
    let cell = match (switched.first(), baseline.first()) {
        (Some(s), _) => s.cell.clone(),
        (None, Some(b)) => b.cell.clone(),
        (None, None) => {
            return Err(StatsError::EmptyIntersection {
                prefix: "?".into(),
                suffix: "?".into(),
            })
        }
    };
    let base: BTreeMap<&str, f64> = baseline
        .iter()
        .map(|r| (r.episode_id.as_str(), r.score))
        .collect();
    let mut pairs: Vec<(&str, f64)> = switched
        .iter()
        .filter_map(|r| {
            base.get(r.episode_id.as_str())
                .map(|b| (r.episode_id.as_str(), r.score - b))
        })
        .collect();
    pairs.sort_by(|a, b| a.0.cmp(b.0));
    if pairs.is_empty() {
        return Err(StatsError::EmptyIntersection {
            prefix: cell.prefix.name.clone(),
            suffix: cell.suffix.name.clone(),
        });
    }
    Ok(PairedCell {
        cell,
        episode_ids: pairs.iter().map(|p| p.0.to_string()).collect(),
        deltas: pairs.iter().map(|p| p.1).collect(),
    })
}

/// Paired BCa interval: resamples episodes, so each replicate keeps the
/// switched and baseline score of an episode together.
pub fn paired_bca_ci(
    cell: &PairedCell,
    resamples: usize,
    seed: u64,
    level: f64,
) -> Result<Interval, StatsError> {
    super::bca_ci(&cell.deltas, resamples, seed, level)
}

/// Highest configured level whose interval excludes zero. Diagonal cells
/// never get stars.
pub fn star_level(
    cell: &PairedCell,
    config: &BootstrapConfig,
    seed: u64,
) -> Result<StarLevel, StatsError> {
    if cell.cell.is_diagonal() {
        return Ok(StarLevel::None);
    }
    let boot = Bootstrap::new(&cell.deltas, config.resamples, seed)?;
    Ok(stars_from(&boot, &config.levels))
}

pub(crate) fn stars_from(boot: &Bootstrap, levels: &[f64]) -> StarLevel {
    levels
        .iter()
        .filter(|&&l| boot.interval(l).excludes_zero())
        .filter_map(|&l| StarLevel::for_level(l))
        .max()
        .unwrap_or(StarLevel::None)
}
