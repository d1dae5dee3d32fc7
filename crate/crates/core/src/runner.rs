//! Executes the K×K prefix/suffix matrix.
//!
//! For cell (A→B) and episode `e`, assistant turns `1..=T` come from A's
//! cached prefix and turns `T+1..=L` are generated live by B. The diagonal
//! (B→B) uses B's own cached prefix, so it is the no-switch baseline.
//!
//! Results are appended to `results.jsonl` as cells finish, which makes an
//! interrupted run resumable; at the end the file is rewritten in plan order.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, ChatBackend, ChatRequest, GenerationParams};
use crate::cache::{CacheError, CacheKey, CacheStats, PrefixCache};
use crate::model::{validate_episode, CellId, CellResult, Episode, ModelId, Task, Transcript};
use crate::stats::matrix::FAILURE_POLICY;
use crate::tasks::{score_episode, ScoreError, SuccessMode};
use crate::{SCHEMA_VERSION, TOOL_VERSION};

pub const RESULTS_FILE: &str = "results.jsonl";
pub const FAILURES_FILE: &str = "failures.jsonl";
pub const SUMMARY_FILE: &str = "run_summary.json";

/// Where the authorship switch happens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SwitchPolicy {
    /// `T = L - 1`: the suffix model writes only the last turn.
    #[default]
    FinalTurn,
    /// A fixed number of prefix turns, `1 <= T <= L - 1`.
    FixedT { t: usize },
}

impl SwitchPolicy {
    pub fn prefix_turns(self, episode_turns: usize) -> Result<usize, String> {
        let t = match self {
            SwitchPolicy::FinalTurn => episode_turns.saturating_sub(1),
            SwitchPolicy::FixedT { t } => t,
        };
        if t < 1 || t + 1 > episode_turns {
            return Err(format!(
                "switch after {t} turns is impossible for a {episode_turns}-turn episode (need 1 <= T <= L-1)"
            ));
        }
        Ok(t)
    }

    pub fn describe(self) -> String {
        match self {
            SwitchPolicy::FinalTurn => "final_turn".into(),
            SwitchPolicy::FixedT { t } => format!("fixed_t({t})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunPlan {
    pub task: Task,
    pub models: Vec<ModelId>,
    pub episodes: Vec<Episode>,
    pub policy: SwitchPolicy,
    pub params: GenerationParams,
    pub success_mode: SuccessMode,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub workers: usize,
}

impl RunPlan {
    /// Every problem with the plan, so they can be reported together.
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if self.models.is_empty() {
            errors.push("no models configured".to_string());
        }
        let mut names = HashSet::new();
        for m in &self.models {
            if !m.is_valid() {
                errors.push(format!("invalid model id `{}/{}`", m.provider, m.name));
            }
            if !names.insert(&m.name) {
                errors.push(format!("model `{}` listed twice", m.name));
            }
        }
        if self.episodes.is_empty() {
            errors.push("no episodes to run".to_string());
        }
        let mut ids = HashSet::new();
        for ep in &self.episodes {
            if ep.task != self.task {
                errors.push(format!(
                    "episode {} belongs to task {}, plan is {}",
                    ep.episode_id, ep.task, self.task
                ));
            }
            if !ids.insert(&ep.episode_id) {
                errors.push(format!("episode id {} appears twice", ep.episode_id));
            }
            errors.extend(
                validate_episode(ep)
                    .into_iter()
                    .map(|v| format!("episode {}: {v}", ep.episode_id)),
            );
            if let Err(e) = self.policy.prefix_turns(ep.turns()) {
                errors.push(format!("episode {}: {e}", ep.episode_id));
            }
        }
        if let Err(e) = self.params.validate() {
            errors.push(e);
        }
        if self.workers == 0 {
            errors.push("workers must be at least 1".to_string());
        }
        errors
    }

    pub fn results_path(&self) -> PathBuf {
        self.output_dir.join(RESULTS_FILE)
    }

    fn model_index(&self, name: &str) -> usize {
        self.models
            .iter()
            .position(|m| m.name == name)
            .unwrap_or(usize::MAX)
    }

    fn episode_index(&self, id: &str) -> usize {
        self.episodes
            .iter()
            .position(|e| e.episode_id == id)
            .unwrap_or(usize::MAX)
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid run plan:\n  - {}", .0.join("\n  - "))]
    Plan(Vec<String>),
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Results {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("run aborted: {0}")]
    Fatal(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Why one (cell, episode) produced no result.
#[derive(Debug, Error)]
pub enum CellError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("scoring failed: {0}")]
    Score(#[from] ScoreError),
}

impl CellError {
    /// Errors that should stop the whole run instead of failing one cell.
    pub fn is_fatal(&self) -> bool {
        match self {
            CellError::Backend(e) => e.is_fatal(),
            CellError::Cache(CacheError::Backend(e)) => e.is_fatal(),
            CellError::Cache(_) => true,
            CellError::Score(_) => false,
        }
    }
}

/// A cell result plus the full transcript, for debugging and replay.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub result: CellResult,
    pub transcript: Transcript,
    pub suffix_calls: u64,
}

/// Assembles `T` cached prefix turns by `prefix` and the live suffix turns
/// by `suffix`, then scores the transcript.
pub fn run_cell(
    prefix: &ModelId,
    suffix: &ModelId,
    episode: &Episode,
    plan: &RunPlan,
    backend: &dyn ChatBackend,
    cache: &PrefixCache,
) -> Result<CellOutcome, CellError> {
    let turns = plan
        .policy
        .prefix_turns(episode.turns())
        .map_err(CacheError::Precondition)?;
    let key = CacheKey {
        task: episode.task,
        episode_id: episode.episode_id.clone(),
        prefix_model: prefix.clone(),
        prefix_turns: turns,
        params_digest: plan.params.digest(),
    };
    let prefix_texts = cache.get_or_generate(&key, episode, backend, &plan.params)?;
    continue_from_prefix(prefix, &prefix_texts, suffix, episode, plan, backend)
}

/// Finishes an episode from already-generated prefix turns.
pub fn continue_from_prefix(
    prefix: &ModelId,
    prefix_texts: &[String],
    suffix: &ModelId,
    episode: &Episode,
    plan: &RunPlan,
    backend: &dyn ChatBackend,
) -> Result<CellOutcome, CellError> {
    let t = prefix_texts.len();
    let mut transcript = Transcript::new();
    for (user, text) in episode.user_turns.iter().zip(prefix_texts) {
        transcript.push_user(user.clone());
        transcript.push_assistant(text.clone(), prefix.clone());
    }
    let mut refusal = false;
    let mut calls = 0;
    for user in &episode.user_turns[t..] {
        transcript.push_user(user.clone());
        let generation = backend.generate(&ChatRequest {
            model: suffix,
            transcript: &transcript,
            params: &plan.params,
            task: episode.task,
            episode_id: &episode.episode_id,
        })?;
        calls += 1;
        refusal = generation.refusal;
        transcript.push_assistant(generation.text, suffix.clone());
    }
    let score = score_episode(&transcript, episode, plan.success_mode)?;
    let final_response = transcript
        .assistant_turn(episode.turns())
        .unwrap_or_default()
        .to_string();
    Ok(CellOutcome {
        result: CellResult {
            task: episode.task,
            cell: CellId::new(prefix.clone(), suffix.clone()),
            episode_id: episode.episode_id.clone(),
            score,
            final_response,
            refusal,
            seed: plan.seed,
            params_digest: plan.params.digest(),
        },
        transcript,
        suffix_calls: calls,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub task: Task,
    pub prefix_model: String,
    pub suffix_model: String,
    pub episode_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub tool_version: String,
    pub task: Task,
    pub models: Vec<String>,
    pub episodes: usize,
    pub policy: SwitchPolicy,
    pub success_mode: SuccessMode,
    pub params_digest: String,
    pub seed: u64,
    pub workers: usize,
    pub failure_policy: String,
    pub planned: usize,
    pub skipped: usize,
    pub completed: usize,
    pub failed: usize,
    /// Failures keyed by `prefix->suffix`.
    pub failures_per_cell: BTreeMap<String, usize>,
    pub prefix_generations: u64,
    pub cache_hits: u64,
    pub cache_hit_rate: Option<f64>,
    pub suffix_calls: u64,
    /// Every backend call, including ones that failed.
    pub generation_calls: u64,
    /// Off-diagonal results with no matching diagonal result.
    pub unpaired: Vec<String>,
    pub started_at: String,
    pub finished_at: String,
}

/// Reads a results file. With `lenient`, an unparsable final line (an
/// interrupted append) is dropped with a warning instead of failing.
pub fn load_results(path: &Path, lenient: bool) -> Result<Vec<CellResult>, RunError> {
    let file = File::open(path).map_err(io_err(path))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(io_err(path))?;
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CellResult>(line) {
            Ok(r) => out.push(r),
            Err(e) if lenient && Some(i) == last => {
                log::warn!(
                    "{}:{}: dropping incomplete trailing record ({e})",
                    path.display(),
                    i + 1
                );
            }
            Err(e) => {
                return Err(RunError::Results {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

fn to_line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("records serialize");
    s.push('\n');
    s
}

/// Writes `contents` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), RunError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(contents).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| RunError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

struct Sink {
    file: Mutex<File>,
    path: PathBuf,
}

impl Sink {
    fn append(&self, line: &str) -> Result<(), RunError> {
        let mut f = self.file.lock().unwrap();
        f.write_all(line.as_bytes()).map_err(io_err(&self.path))?;
        f.flush().map_err(io_err(&self.path))
    }
}

/// Counts generation calls made through a backend.
struct Counting<'a> {
    inner: &'a dyn ChatBackend,
    calls: AtomicU64,
}

impl ChatBackend for Counting<'_> {
    fn generate(
        &self,
        request: &ChatRequest<'_>,
    ) -> Result<crate::backend::Generation, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.generate(request)
    }
}

/// Runs every pending (cell, episode) of the plan and writes results,
/// failures and the run summary into `plan.output_dir`.
pub fn run_matrix(
    plan: &RunPlan,
    backend: &dyn ChatBackend,
    cache: &PrefixCache,
) -> Result<RunSummary, RunError> {
    let errors = plan.validate();
    if !errors.is_empty() {
        return Err(RunError::Plan(errors));
    }
    let started_at = chrono::Utc::now().to_rfc3339();
    fs::create_dir_all(&plan.output_dir).map_err(io_err(&plan.output_dir))?;
    let results_path = plan.results_path();
    let digest = plan.params.digest();

    let existing = if results_path.exists() {
        load_results(&results_path, true)?
    } else {
        Vec::new()
    };
    let mut done: HashSet<(String, String, String)> = HashSet::new();
    for r in &existing {
        let in_plan = plan.model_index(&r.cell.prefix.name) != usize::MAX
            && plan.model_index(&r.cell.suffix.name) != usize::MAX
            && plan.episode_index(&r.episode_id) != usize::MAX;
        if in_plan && r.task == plan.task && r.params_digest != digest {
            return Err(RunError::Plan(vec![format!(
                "{} holds results produced with different generation parameters; use a fresh output directory",
                results_path.display()
            )]));
        }
        done.insert(r.key());
    }

    let mut diagonal = Vec::new();
    let mut off_diagonal = Vec::new();
    let mut planned = 0;
    for a in &plan.models {
        for b in &plan.models {
            for ep in &plan.episodes {
                planned += 1;
                if done.contains(&(a.name.clone(), b.name.clone(), ep.episode_id.clone())) {
                    continue;
                }
                if a == b {
                    diagonal.push((a, b, ep));
                } else {
                    off_diagonal.push((a, b, ep));
                }
            }
        }
    }
    let skipped = planned - diagonal.len() - off_diagonal.len();
    log::info!(
        "{} cell-episodes planned, {skipped} already done, {} to run",
        planned,
        diagonal.len() + off_diagonal.len()
    );

    // Rewrite the existing records first so a truncated trailing line does
    // not corrupt the appends that follow.
    let mut body = String::new();
    for r in &existing {
        body.push_str(&to_line(r));
    }
    write_atomic(&results_path, body.as_bytes())?;
    let sink = Sink {
        file: Mutex::new(
            OpenOptions::new()
                .append(true)
                .open(&results_path)
                .map_err(io_err(&results_path))?,
        ),
        path: results_path.clone(),
    };

    let before: CacheStats = cache.stats();
    let counting = Counting {
        inner: backend,
        calls: AtomicU64::new(0),
    };
    let abort = AtomicBool::new(false);
    let fatal: Mutex<Option<String>> = Mutex::new(None);
    let failures: Mutex<Vec<FailureRecord>> = Mutex::new(Vec::new());
    let new_results: Mutex<Vec<CellResult>> = Mutex::new(Vec::new());
    let suffix_calls = AtomicU64::new(0);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| RunError::Fatal(format!("cannot start worker pool: {e}")))?;

    let io_error: Mutex<Option<RunError>> = Mutex::new(None);
    for phase in [&diagonal, &off_diagonal] {
        pool.install(|| {
            phase.par_iter().for_each(|&(a, b, ep)| {
                if abort.load(Ordering::SeqCst) {
                    return;
                }
                match run_cell(a, b, ep, plan, &counting, cache) {
                    Ok(outcome) => {
                        suffix_calls.fetch_add(outcome.suffix_calls, Ordering::SeqCst);
                        if let Err(e) = sink.append(&to_line(&outcome.result)) {
                            abort.store(true, Ordering::SeqCst);
                            *io_error.lock().unwrap() = Some(e);
                            return;
                        }
                        new_results.lock().unwrap().push(outcome.result);
                    }
                    Err(e) if e.is_fatal() => {
                        abort.store(true, Ordering::SeqCst);
                        fatal.lock().unwrap().get_or_insert_with(|| {
                            format!("{a}->{b}, episode {}: {e}", ep.episode_id)
                        });
                    }
                    Err(e) => {
                        log::warn!("{a}->{b}, episode {} failed: {e}", ep.episode_id);
                        failures.lock().unwrap().push(FailureRecord {
                            task: plan.task,
                            prefix_model: a.name.clone(),
                            suffix_model: b.name.clone(),
                            episode_id: ep.episode_id.clone(),
                            error: e.to_string(),
                        });
                    }
                }
            });
        });
    }
    drop(sink);
    if let Some(e) = io_error.into_inner().unwrap() {
        return Err(e);
    }

    let mut failures = failures.into_inner().unwrap();
    failures.sort_by_key(|f| {
        (
            plan.model_index(&f.prefix_model),
            plan.model_index(&f.suffix_model),
            plan.episode_index(&f.episode_id),
        )
    });
    let failures_path = plan.output_dir.join(FAILURES_FILE);
    let failure_body: String = failures.iter().map(to_line).collect();
    write_atomic(&failures_path, failure_body.as_bytes())?;

    if let Some(reason) = fatal.into_inner().unwrap() {
        return Err(RunError::Fatal(format!(
            "{reason}\ncompleted results were kept in {}; rerun to resume",
            results_path.display()
        )));
    }

    // Compact: plan order, then anything from earlier plans by name.
    let mut all = existing;
    all.extend(new_results.into_inner().unwrap());
    all.sort_by(|x, y| {
        let kx = (
            plan.model_index(&x.cell.prefix.name),
            plan.model_index(&x.cell.suffix.name),
            plan.episode_index(&x.episode_id),
        );
        let ky = (
            plan.model_index(&y.cell.prefix.name),
            plan.model_index(&y.cell.suffix.name),
            plan.episode_index(&y.episode_id),
        );
        kx.cmp(&ky).then_with(|| x.key().cmp(&y.key()))
    });
    let body: String = all.iter().map(to_line).collect();
    write_atomic(&results_path, body.as_bytes())?;

    let unpaired = check_pairing(&all);
    for u in &unpaired {
        log::warn!("unpaired result {u}: its diagonal baseline is missing");
    }

    let mut failures_per_cell = BTreeMap::new();
    for f in &failures {
        *failures_per_cell
            .entry(format!("{}->{}", f.prefix_model, f.suffix_model))
            .or_insert(0) += 1;
    }
    let after = cache.stats();
    let hits = after.hits - before.hits;
    let misses = after.misses - before.misses;
    let completed = planned - skipped - failures.len();
    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION.to_string(),
        task: plan.task,
        models: plan.models.iter().map(|m| m.name.clone()).collect(),
        episodes: plan.episodes.len(),
        policy: plan.policy,
        success_mode: plan.success_mode,
        params_digest: digest,
        seed: plan.seed,
        workers: plan.workers,
        failure_policy: FAILURE_POLICY.to_string(),
        planned,
        skipped,
        completed,
        failed: failures.len(),
        failures_per_cell,
        prefix_generations: misses,
        cache_hits: hits,
        cache_hit_rate: (hits + misses > 0).then(|| hits as f64 / (hits + misses) as f64),
        suffix_calls: suffix_calls.load(Ordering::SeqCst),
        generation_calls: counting.calls.load(Ordering::SeqCst),
        unpaired,
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
    };
    let summary_path = plan.output_dir.join(SUMMARY_FILE);
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    write_atomic(&summary_path, text.as_bytes())?;
    Ok(summary)
}

/// Off-diagonal results whose (suffix, suffix, episode) baseline is absent.
pub fn check_pairing(results: &[CellResult]) -> Vec<String> {
    let diagonal: HashMap<(&str, &str), ()> = results
        .iter()
        .filter(|r| r.cell.is_diagonal())
        .map(|r| ((r.cell.suffix.name.as_str(), r.episode_id.as_str()), ()))
        .collect();
    results
        .iter()
        .filter(|r| !r.cell.is_diagonal())
        .filter(|r| !diagonal.contains_key(&(r.cell.suffix.name.as_str(), r.episode_id.as_str())))
        .map(|r| format!("{}, episode {}", r.cell, r.episode_id))
        .collect()
}
