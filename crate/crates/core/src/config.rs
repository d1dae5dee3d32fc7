//! Run configuration: a TOML file, overridable from the command line.
//!
//! ```toml
//! task = "coqa"
//! dataset = "data/coqa-dev.json"
//! sample_size = 200
//! seed = 0
//! output_dir = "runs/coqa"
//! cache_root = "cache"
//!
//! [backends.openai]
//! kind = "http"
//! endpoint = "https://api.openai.com/v1/chat/completions"
//! api_key_env = "OPENAI_API_KEY"
//! dialect = "openai"
//!
//! [[models]]
//! name = "gpt-5-nano-2025-08-07"
//! backend = "openai"
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    BoundedBackend, ChatBackend, GenerationParams, HttpBackend, HttpBackendConfig, MockBackend,
    MockScript, ModelRouter,
};
use crate::cache::CorruptionPolicy;
use crate::model::{ModelId, Task};
use crate::runner::SwitchPolicy;
use crate::stats::BootstrapConfig;
use crate::tasks::{coqa, SuccessMode};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Http(HttpBackendConfig),
    /// Deterministic offline backend; `script` optionally pins replies.
    Mock {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        script: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub name: String,
    /// Key into `[backends]`.
    pub backend: String,
    /// Provider label recorded with results; defaults to the backend key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider: Option<String>,
}

impl ModelEntry {
    pub fn model_id(&self) -> ModelId {
        ModelId::new(
            self.provider
                .clone()
                .unwrap_or_else(|| self.backend.clone()),
            self.name.clone(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayConfig {
    /// |Δ̂| above this is flagged as a risky handoff.
    pub threshold: f64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self { threshold: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub dataset: PathBuf,
    #[serde(default = "default_sample_size")]
    pub sample_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// CoQA only: question turns kept per story.
    #[serde(default = "default_turns")]
    pub turns: usize,
    /// Multi-IF only: language filter; empty keeps every language.
    #[serde(default = "default_language")]
    pub language: String,
    #[serde(default)]
    pub success_mode: SuccessMode,
    #[serde(default)]
    pub policy: SwitchPolicy,
    #[serde(default)]
    pub params: GenerationParams,
    #[serde(default = "default_cache_root")]
    pub cache_root: PathBuf,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub cache_corruption: CorruptionPolicy,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    #[serde(default)]
    pub replay: ReplayConfig,
    #[serde(default)]
    pub backends: BTreeMap<String, BackendConfig>,
    #[serde(default)]
    pub models: Vec<ModelEntry>,
}

fn default_sample_size() -> usize {
    200
}
fn default_turns() -> usize {
    coqa::DEFAULT_TURNS
}
fn default_language() -> String {
    "English".into()
}
fn default_cache_root() -> PathBuf {
    "cache".into()
}
fn default_output_dir() -> PathBuf {
    "output".into()
}
fn default_workers() -> usize {
    8
}

/// Command-line overrides; `None` keeps the file's value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub task: Option<Task>,
    pub models: Option<Vec<String>>,
    pub sample_size: Option<usize>,
    pub seed: Option<u64>,
    pub cache_root: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub resamples: Option<usize>,
    pub threshold: Option<f64>,
    pub workers: Option<usize>,
    pub regenerate_corrupt: bool,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, String> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.dataset = resolve(base_dir, &cfg.dataset);
        cfg.cache_root = resolve(base_dir, &cfg.cache_root);
        cfg.output_dir = resolve(base_dir, &cfg.output_dir);
        for backend in cfg.backends.values_mut() {
            if let BackendConfig::Mock { script: Some(s) } = backend {
                *s = resolve(base_dir, s);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|message| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        })
    }

    /// Applies overrides. `--models` selects and orders configured models.
    pub fn apply(&mut self, o: &Overrides) -> Vec<String> {
        let mut errors = Vec::new();
        if let Some(t) = o.task {
            self.task = t;
        }
        if let Some(names) = &o.models {
            let mut picked = Vec::new();
            for n in names {
                match self.models.iter().find(|m| &m.name == n) {
                    Some(m) => picked.push(m.clone()),
                    None => errors.push(format!(
                        "--models: `{n}` is not configured under [[models]]"
                    )),
                }
            }
            self.models = picked;
        }
        if let Some(v) = o.sample_size {
            self.sample_size = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.cache_root {
            self.cache_root = v.clone();
        }
        if let Some(v) = &o.output_dir {
            self.output_dir = v.clone();
        }
        if let Some(v) = o.resamples {
            self.bootstrap.resamples = v;
        }
        if let Some(v) = o.threshold {
            self.replay.threshold = v;
        }
        if let Some(v) = o.workers {
            self.workers = v;
        }
        if o.regenerate_corrupt {
            self.cache_corruption = CorruptionPolicy::Regenerate;
        }
        errors
    }

    /// Every configuration problem, checked before any network call.
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if !self.dataset.is_file() {
            errors.push(format!("dataset {} does not exist", self.dataset.display()));
        }
        if self.sample_size == 0 {
            errors.push("sample_size must be at least 1".into());
        }
        if self.task == Task::Coqa && self.turns < 2 {
            errors.push(format!("turns must be at least 2, got {}", self.turns));
        }
        if let SwitchPolicy::FixedT { t } = self.policy {
            let l = match self.task {
                Task::Coqa => self.turns,
                Task::MultiIf => crate::tasks::multiif::TURNS,
            };
            if let Err(e) = self.policy.prefix_turns(l) {
                errors.push(format!("policy fixed_t {t}: {e}"));
            }
        }
        if let Err(e) = self.params.validate() {
            errors.push(format!("params: {e}"));
        }
        if let Err(e) = self.bootstrap.validate() {
            errors.push(format!("bootstrap: {e}"));
        }
        if self.replay.threshold.is_nan() || self.replay.threshold < 0.0 {
            errors.push("replay.threshold must be >= 0".into());
        }
        if self.workers == 0 {
            errors.push("workers must be at least 1".into());
        }
        if self.models.is_empty() {
            errors.push("no models configured".into());
        }
        let mut seen = std::collections::HashSet::new();
        for m in &self.models {
            if m.name.trim().is_empty() {
                errors.push("model with empty name".into());
            }
            if !seen.insert(&m.name) {
                errors.push(format!("model `{}` listed twice", m.name));
            }
            if !self.backends.contains_key(&m.backend) {
                errors.push(format!(
                    "model `{}` uses unknown backend `{}`",
                    m.name, m.backend
                ));
            }
        }
        for (name, b) in &self.backends {
            if !self.models.iter().any(|m| &m.backend == name) {
                continue;
            }
            match b {
                BackendConfig::Http(h) => errors.extend(
                    h.validate()
                        .into_iter()
                        .map(|e| format!("backend `{name}`: {e}")),
                ),
                BackendConfig::Mock { script: Some(s) } if !s.is_file() => errors.push(format!(
                    "backend `{name}`: mock script {} does not exist",
                    s.display()
                )),
                BackendConfig::Mock { .. } => {}
            }
        }
        errors
    }

    pub fn model_ids(&self) -> Vec<ModelId> {
        self.models.iter().map(ModelEntry::model_id).collect()
    }

    pub fn language_filter(&self) -> Option<&str> {
        (!self.language.is_empty()).then_some(self.language.as_str())
    }

    /// One backend instance per `[backends]` entry, routed by model name.
    pub fn build_router(&self) -> Result<ModelRouter, ConfigError> {
        let mut instances: BTreeMap<&str, Arc<dyn ChatBackend>> = BTreeMap::new();
        let mut errors = Vec::new();
        for (name, b) in &self.backends {
            let backend: Arc<dyn ChatBackend> = match b {
                BackendConfig::Http(h) => match HttpBackend::new(h.clone()) {
                    Ok(http) => Arc::new(BoundedBackend::new(http, h.max_concurrency)),
                    Err(e) => {
                        errors.push(format!("backend `{name}`: {e}"));
                        continue;
                    }
                },
                BackendConfig::Mock { script } => {
                    let script = match script {
                        Some(path) => match MockScript::load(path) {
                            Ok(s) => s,
                            Err(e) => {
                                errors.push(format!("backend `{name}`: {e}"));
                                continue;
                            }
                        },
                        None => MockScript::default(),
                    };
                    Arc::new(MockBackend::new(script))
                }
            };
            instances.insert(name, backend);
        }
        if !errors.is_empty() {
            return Err(ConfigError::Invalid(errors));
        }
        let mut router = ModelRouter::new();
        for m in &self.models {
            if let Some(b) = instances.get(m.backend.as_str()) {
                router.route(&m.name, b.clone());
            }
        }
        Ok(router)
    }

    /// The configuration actually used, as TOML.
    pub fn effective_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
task = "multi_if"
dataset = "data.jsonl"
sample_size = 10

[policy]
kind = "fixed_t"
t = 1

[backends.local]
kind = "http"
endpoint = "http://127.0.0.1:9/v1/chat/completions"

[backends.offline]
kind = "mock"

[[models]]
name = "a"
backend = "offline"

[[models]]
name = "b"
backend = "local"
provider = "acme"
"#;

    #[test]
    fn parses_and_resolves_paths() {
        let cfg = RunConfig::from_toml(SAMPLE, Path::new("/base")).unwrap();
        assert_eq!(cfg.task, Task::MultiIf);
        assert_eq!(cfg.dataset, Path::new("/base/data.jsonl"));
        assert_eq!(cfg.policy, SwitchPolicy::FixedT { t: 1 });
        assert_eq!(cfg.bootstrap.resamples, 1000);
        assert_eq!(cfg.model_ids()[1], ModelId::new("acme", "b"));
        assert_eq!(cfg.model_ids()[0].provider, "offline");
        let again = RunConfig::from_toml(&cfg.effective_toml(), Path::new("/elsewhere")).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = SAMPLE.replace("sample_size = 10", "sample_size = 10\nsampel = 3");
        assert!(RunConfig::from_toml(&bad, Path::new(".")).is_err());
    }

    #[test]
    fn validation_lists_every_error() {
        let mut cfg = RunConfig::from_toml(SAMPLE, Path::new("/nonexistent")).unwrap();
        cfg.sample_size = 0;
        cfg.workers = 0;
        cfg.models.push(ModelEntry {
            name: "a".into(),
            backend: "nope".into(),
            provider: None,
        });
        let errors = cfg.validate();
        for needle in [
            "dataset",
            "sample_size",
            "workers",
            "listed twice",
            "unknown backend",
        ] {
            assert!(
                errors.iter().any(|e| e.contains(needle)),
                "missing {needle}: {errors:?}"
            );
        }
    }

    #[test]
    fn overrides_select_models() {
        let mut cfg = RunConfig::from_toml(SAMPLE, Path::new(".")).unwrap();
        let errors = cfg.apply(&Overrides {
            models: Some(vec!["b".into(), "zzz".into()]),
            seed: Some(5),
            regenerate_corrupt: true,
            ..Default::default()
        });
        assert_eq!(errors.len(), 1);
        assert_eq!(cfg.models.len(), 1);
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.cache_corruption, CorruptionPolicy::Regenerate);
    }
}
