//! Switch-effect statistics: BCa intervals, paired deltas, the additive
//! prefix/suffix factorization and cross-task factor correlation.

pub mod bootstrap;
pub mod correlation;
pub mod factor;
pub mod matrix;
pub mod paired;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bootstrap::{bca_ci, Bootstrap};
pub use correlation::{factor_correlation, CorrelationMethod, FactorCorrelation, FactorKind};
pub use factor::{
    analyze, fit_additive, loo_cv_r2, top_residuals, DeltaMatrix, FactorModel, LooResult, Residual,
};
pub use matrix::{build_switch_matrix, MatrixOptions};
pub use paired::{paired_bca_ci, paired_deltas, star_level, PairedCell};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("non-finite sample value")]
    NonFinite,
    #[error("invalid bootstrap configuration: {0}")]
    InvalidConfig(String),
    #[error("cell {prefix}->{suffix} shares no episodes with the {suffix} baseline")]
    EmptyIntersection { prefix: String, suffix: String },
    #[error("no diagonal results for suffix model {0}; paired deltas need its no-switch baseline")]
    MissingDiagonal(String),
    #[error("duplicate result for {prefix}->{suffix}, episode {episode}")]
    DuplicateResult {
        prefix: String,
        suffix: String,
        episode: String,
    },
    #[error("results mix tasks {0} and {1}")]
    MixedTasks(String, String),
    #[error("additive model is not identifiable: {0}")]
    Unidentifiable(String),
    #[error("need at least {needed} models, got {got}")]
    TooFewModels { needed: usize, got: usize },
    #[error("correlation undefined: {0}")]
    Undefined(String),
    #[error("malformed table: {0}")]
    Table(String),
}

/// Resampling settings shared by every interval in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
    /// Confidence levels used for significance stars, strictly increasing.
    pub levels: Vec<f64>,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: 1000,
            seed: 0,
            levels: vec![0.90, 0.95, 0.99],
        }
    }
}

impl BootstrapConfig {
    pub const MIN_RESAMPLES: usize = 100;

    pub fn validate(&self) -> Result<(), StatsError> {
        if self.resamples < Self::MIN_RESAMPLES {
            return Err(StatsError::InvalidConfig(format!(
                "resamples must be at least {}, got {}",
                Self::MIN_RESAMPLES,
                self.resamples
            )));
        }
        if self.levels.is_empty() {
            return Err(StatsError::InvalidConfig("no confidence levels".into()));
        }
        if self.levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
            return Err(StatsError::InvalidConfig(
                "levels must lie in (0, 1)".into(),
            ));
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(StatsError::InvalidConfig(
                "levels must be strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(BootstrapConfig::default().validate().is_ok());
        let few = BootstrapConfig {
            resamples: 10,
            ..Default::default()
        };
        assert!(few.validate().is_err());
        let unordered = BootstrapConfig {
            levels: vec![0.95, 0.90],
            ..Default::default()
        };
        assert!(unordered.validate().is_err());
    }
}
