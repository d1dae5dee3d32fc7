//! Implementations behind each CLI subcommand. Every function here is
//! usable as a library call; the binary only parses arguments and prints.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, ChatBackend, ChatRequest, Generation};
use crate::cache::{CacheError, CacheKey, PrefixCache};
use crate::config::{ConfigError, RunConfig};
use crate::digest::{derive_seed, sha256_hex};
use crate::model::{Episode, Interval, IntervalMethod, ModelId, StarLevel, SwitchMatrix, Task};
use crate::runner::{self, continue_from_prefix, write_atomic, RunError, RunPlan, RunSummary};
use crate::stats::factor::{analyze, loo_cv_r2, top_residuals, DeltaMatrix, FactorModel, Residual};
use crate::stats::matrix::{build_switch_matrix, delta_matrix, parse_delta_table, MatrixOptions};
use crate::stats::paired::stars_from;
use crate::stats::{
    factor_correlation, Bootstrap, BootstrapConfig, CorrelationMethod, FactorCorrelation,
    FactorKind, StatsError,
};
use crate::tasks::{coqa, multiif, LoadError, LoadReport};
use crate::{SCHEMA_VERSION, TOOL_VERSION};

pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.toml";
pub const MATRIX_FILE: &str = "matrix.json";
pub const FACTOR_FILE: &str = "factors.json";
pub const REPLAY_FILE: &str = "replay.json";

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("{0}")]
    Invalid(String),
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CommandError> {
    std::fs::read(path).map_err(|source| CommandError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CommandError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| CommandError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    Ok(write_atomic(path, text.as_bytes())?)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<(T, String), CommandError> {
    let bytes = read_bytes(path)?;
    let value = serde_json::from_slice(&bytes).map_err(|e| CommandError::Parse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok((value, sha256_hex(&bytes)))
}

/// Loads and samples the configured dataset.
pub fn load_episodes(
    cfg: &RunConfig,
    sample_size: usize,
) -> Result<(Vec<Episode>, LoadReport), LoadError> {
    Ok(match cfg.task {
        Task::Coqa => {
            let load = coqa::load_coqa(&cfg.dataset, cfg.turns, sample_size, cfg.seed)?;
            (
                load.episodes
                    .iter()
                    .map(coqa::CoqaEpisode::to_episode)
                    .collect(),
                load.report,
            )
        }
        Task::MultiIf => {
            let load =
                multiif::load_multiif(&cfg.dataset, sample_size, cfg.seed, cfg.language_filter())?;
            (
                load.episodes
                    .iter()
                    .map(multiif::MultiIfEpisode::to_episode)
                    .collect(),
                load.report,
            )
        }
    })
}

fn validated(cfg: &RunConfig) -> Result<(), CommandError> {
    let errors = cfg.validate();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(ConfigError::Invalid(errors).into())
    }
}

/// Builds the plan for a validated config.
pub fn plan_for(cfg: &RunConfig) -> Result<RunPlan, CommandError> {
    let (episodes, report) = load_episodes(cfg, cfg.sample_size)?;
    log::info!(
        "loaded {} episodes ({} rows, {} usable)",
        episodes.len(),
        report.rows,
        report.usable
    );
    Ok(RunPlan {
        task: cfg.task,
        models: cfg.model_ids(),
        episodes,
        policy: cfg.policy,
        params: cfg.params.clone(),
        success_mode: cfg.success_mode,
        seed: cfg.seed,
        output_dir: cfg.output_dir.clone(),
        workers: cfg.workers,
    })
}

/// Runs the switch matrix. The effective configuration is written next to
/// the results.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunSummary, CommandError> {
    validated(cfg)?;
    let router = cfg.build_router()?;
    let plan = plan_for(cfg)?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|source| CommandError::Io {
        path: cfg.output_dir.clone(),
        source,
    })?;
    write_atomic(
        &cfg.output_dir.join(EFFECTIVE_CONFIG_FILE),
        cfg.effective_toml().as_bytes(),
    )?;
    let cache = PrefixCache::open(&cfg.cache_root, cfg.cache_corruption)?;
    Ok(runner::run_matrix(&plan, &router, &cache)?)
}

/// Aggregates a results file into a switch matrix and writes it to `out`.
pub fn cmd_stats(
    results: &Path,
    bootstrap: &BootstrapConfig,
    models: Option<Vec<String>>,
    out: Option<&Path>,
) -> Result<SwitchMatrix, CommandError> {
    let digest = sha256_hex(&read_bytes(results)?);
    let records = runner::load_results(results, false)?;
    if records.is_empty() {
        return Err(CommandError::Invalid(format!(
            "{} contains no results",
            results.display()
        )));
    }
    let matrix = build_switch_matrix(
        &records,
        &MatrixOptions {
            bootstrap: bootstrap.clone(),
            models,
            input_digest: digest,
            ..MatrixOptions::default()
        },
    )?;
    if let Some(out) = out {
        write_json(out, &matrix)?;
    }
    Ok(matrix)
}

/// Fitted factors plus everything needed to audit them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub input_digest: String,
    pub task: Option<Task>,
    pub model: FactorModel,
    pub top_residuals: Vec<Residual>,
    pub loo_predictions: Vec<Residual>,
}

/// Reads Δ values from a matrix file (`.json`) or a Δ table (`.csv`).
pub fn load_delta_input(path: &Path) -> Result<(DeltaMatrix, Option<Task>, String), CommandError> {
    let bytes = read_bytes(path)?;
    let digest = sha256_hex(&bytes);
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        let m: SwitchMatrix = serde_json::from_slice(&bytes).map_err(|e| CommandError::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Ok((delta_matrix(&m)?, m.task, digest))
    } else {
        let text = String::from_utf8(bytes).map_err(|e| CommandError::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Ok((parse_delta_table(&text)?.to_delta_matrix()?, None, digest))
    }
}

pub fn cmd_factor(
    input: &Path,
    top_k: usize,
    out: Option<&Path>,
) -> Result<FactorReport, CommandError> {
    let (deltas, task, digest) = load_delta_input(input)?;
    let model = analyze(&deltas)?;
    let loo = loo_cv_r2(&deltas)?;
    let report = FactorReport {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION.to_string(),
        input_digest: digest,
        task,
        top_residuals: top_residuals(&model, top_k),
        loo_predictions: loo.predictions,
        model,
    };
    if let Some(out) = out {
        write_json(out, &report)?;
    }
    Ok(report)
}

/// Pearson and Spearman correlations of α and β between two factor files.
pub fn cmd_correlate(first: &Path, second: &Path) -> Result<Vec<FactorCorrelation>, CommandError> {
    let (a, _): (FactorReport, _) = read_json(first)?;
    let (b, _): (FactorReport, _) = read_json(second)?;
    let mut out = Vec::new();
    for kind in [FactorKind::PrefixAlpha, FactorKind::SuffixBeta] {
        for method in [CorrelationMethod::Pearson, CorrelationMethod::Spearman] {
            out.push(factor_correlation(&a.model, &b.model, kind, method)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEpisode {
    pub episode_id: String,
    pub switched: f64,
    pub baseline: f64,
    pub delta: f64,
}

/// Estimated drift of handing `prefix_model`'s conversations to `candidate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub task: Task,
    pub prefix_model: String,
    pub candidate: String,
    pub n: usize,
    pub delta: f64,
    pub ci: Interval,
    pub ci_level: f64,
    pub star: StarLevel,
    pub threshold: f64,
    pub flagged: bool,
    pub generation_calls: u64,
    pub episodes: Vec<ReplayEpisode>,
}

struct CountingBackend<'a> {
    inner: &'a dyn ChatBackend,
    calls: std::sync::atomic::AtomicU64,
}

impl ChatBackend for CountingBackend<'_> {
    fn generate(&self, request: &ChatRequest<'_>) -> Result<Generation, BackendError> {
        self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        self.inner.generate(request)
    }
}

fn configured_model(cfg: &RunConfig, name: &str) -> Result<ModelId, CommandError> {
    cfg.models
        .iter()
        .find(|m| m.name == name)
        .map(|m| m.model_id())
        .ok_or_else(|| {
            CommandError::Invalid(format!("model `{name}` is not configured under [[models]]"))
        })
}

/// Replays every cached prefix of `prefix_model` through `candidate`'s final
/// turns and compares with the candidate's own no-switch baseline.
pub fn cmd_replay(
    cfg: &RunConfig,
    prefix_model: &str,
    candidate: &str,
) -> Result<ReplayReport, CommandError> {
    validated(cfg)?;
    let prefix = configured_model(cfg, prefix_model)?;
    let suffix = configured_model(cfg, candidate)?;
    let router = cfg.build_router()?;
    let backend = CountingBackend {
        inner: &router,
        calls: Default::default(),
    };
    let cache = PrefixCache::open(&cfg.cache_root, cfg.cache_corruption)?;
    let digest = cfg.params.digest();
    let entries = cache.entries_for(cfg.task, prefix_model, None, Some(&digest))?;
    if entries.is_empty() {
        return Err(CommandError::Invalid(format!(
            "no cached {} prefixes for {prefix_model} under {} with the configured parameters",
            cfg.task,
            cfg.cache_root.display()
        )));
    }

    // Every usable episode, so any cached prefix can be matched.
    let (_, report) = load_episodes(cfg, 0)?;
    let (episodes, _) = load_episodes(cfg, report.usable)?;
    let mut plan = plan_for_episodes(cfg, Vec::new());
    let mut rows = Vec::new();
    for entry in &entries {
        let Some(ep) = episodes
            .iter()
            .find(|e| e.episode_id == entry.key.episode_id)
        else {
            log::warn!(
                "cached episode {} is not in the dataset; skipped",
                entry.key.episode_id
            );
            continue;
        };
        if cfg.policy.prefix_turns(ep.turns()).ok() != Some(entry.key.prefix_turns) {
            continue;
        }
        plan.episodes = vec![ep.clone()];
        let switched = continue_from_prefix(
            &prefix,
            &entry.assistant_texts,
            &suffix,
            ep,
            &plan,
            &backend,
        )
        .map_err(|e| CommandError::Invalid(format!("episode {}: {e}", ep.episode_id)))?;
        let baseline = if prefix == suffix {
            switched.result.score
        } else {
            let key = CacheKey {
                task: cfg.task,
                episode_id: ep.episode_id.clone(),
                prefix_model: suffix.clone(),
                prefix_turns: entry.key.prefix_turns,
                params_digest: digest.clone(),
            };
            let own = cache.get_or_generate(&key, ep, &backend, &cfg.params)?;
            continue_from_prefix(&suffix, &own, &suffix, ep, &plan, &backend)
                .map_err(|e| CommandError::Invalid(format!("episode {}: {e}", ep.episode_id)))?
                .result
                .score
        };
        rows.push(ReplayEpisode {
            episode_id: ep.episode_id.clone(),
            switched: switched.result.score,
            baseline,
            delta: switched.result.score - baseline,
        });
    }
    if rows.is_empty() {
        return Err(CommandError::Invalid(format!(
            "no cached {prefix_model} prefixes match the configured switch policy and dataset"
        )));
    }

    let deltas: Vec<f64> = rows.iter().map(|r| r.delta).collect();
    let delta = deltas.iter().sum::<f64>() / deltas.len() as f64;
    let level = 0.95;
    let (ci, star) = if deltas.len() >= 2 {
        let boot = Bootstrap::new(
            &deltas,
            cfg.bootstrap.resamples,
            derive_seed(
                cfg.bootstrap.seed,
                &format!("replay/{prefix_model}/{candidate}"),
            ),
        )?;
        let star = if prefix == suffix {
            StarLevel::None
        } else {
            stars_from(&boot, &cfg.bootstrap.levels)
        };
        (boot.interval(level), star)
    } else {
        (
            Interval {
                lo: delta,
                hi: delta,
                method: IntervalMethod::Degenerate,
            },
            StarLevel::None,
        )
    };
    let report = ReplayReport {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION.to_string(),
        task: cfg.task,
        prefix_model: prefix_model.to_string(),
        candidate: candidate.to_string(),
        n: rows.len(),
        delta,
        ci,
        ci_level: level,
        star,
        threshold: cfg.replay.threshold,
        flagged: delta.abs() > cfg.replay.threshold,
        generation_calls: backend.calls.load(std::sync::atomic::Ordering::SeqCst),
        episodes: rows,
    };
    write_json(&cfg.output_dir.join(REPLAY_FILE), &report)?;
    Ok(report)
}

fn plan_for_episodes(cfg: &RunConfig, episodes: Vec<Episode>) -> RunPlan {
    RunPlan {
        task: cfg.task,
        models: cfg.model_ids(),
        episodes,
        policy: cfg.policy,
        params: cfg.params.clone(),
        success_mode: cfg.success_mode,
        seed: cfg.seed,
        output_dir: cfg.output_dir.clone(),
        workers: cfg.workers,
    }
}

/// Reads a factor file written by [`cmd_factor`].
pub fn load_factor_report(path: &Path) -> Result<(FactorReport, String), CommandError> {
    read_json(path)
}

/// Reads a matrix file written by [`cmd_stats`].
pub fn load_matrix(path: &Path) -> Result<(SwitchMatrix, String), CommandError> {
    read_json(path)
}
