//! Benchmark adapters: loading, prompt construction and episode scoring.

pub mod coqa;
pub mod multiif;
pub mod verifiers;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Episode, Gold, Task, Transcript};
pub use multiif::SuccessMode;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read dataset {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset {path} is not in a recognised format: {reason}")]
    Format { path: String, reason: String },
    #[error("requested {requested} episodes but only {available} are usable ({skipped_malformed} malformed, {skipped_short} too short, {skipped_unsupported} with unsupported instructions, {skipped_language} other languages)")]
    Shortfall {
        requested: usize,
        available: usize,
        skipped_malformed: usize,
        skipped_short: usize,
        skipped_unsupported: usize,
        skipped_language: usize,
    },
    #[error("invalid instruction arguments in episode {episode}: {reason}")]
    BadArguments { episode: String, reason: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum ScoreError {
    #[error("transcript has {found} assistant turns, expected {expected}")]
    MissingTurn { expected: usize, found: usize },
    #[error("gold payload does not match task {0}")]
    WrongGold(Task),
    #[error("instruction error: {0}")]
    Instruction(String),
}

/// Counts reported by the loaders next to the sampled episodes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows: usize,
    pub usable: usize,
    pub skipped_malformed: usize,
    pub skipped_short: usize,
    pub skipped_unsupported: usize,
    pub skipped_language: usize,
}

impl LoadReport {
    fn shortfall(&self, requested: usize) -> LoadError {
        LoadError::Shortfall {
            requested,
            available: self.usable,
            skipped_malformed: self.skipped_malformed,
            skipped_short: self.skipped_short,
            skipped_unsupported: self.skipped_unsupported,
            skipped_language: self.skipped_language,
        }
    }
}

/// Seeded uniform sample without replacement. Returned indices are sorted
/// so episodes keep their dataset order.
pub(crate) fn sample_indices(available: usize, sample_size: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, available, sample_size).into_vec();
    picked.sort_unstable();
    picked
}

/// Scores a finished transcript with the task's metric.
pub fn score_episode(
    transcript: &Transcript,
    episode: &Episode,
    mode: SuccessMode,
) -> Result<f64, ScoreError> {
    match (&episode.gold, episode.task) {
        (Gold::Coqa { .. }, Task::Coqa) => coqa::score_episode_coqa(transcript, episode),
        (Gold::MultiIf { .. }, Task::MultiIf) => {
            multiif::score_episode_multiif(transcript, episode, mode)
        }
        _ => Err(ScoreError::WrongGold(episode.task)),
    }
}

pub(crate) fn read_to_string(path: &std::path::Path) -> Result<String, LoadError> {
    std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })
}
