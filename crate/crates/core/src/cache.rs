//! Write-once on-disk cache of prefix-model generations.
//!
//! One file per entry at `root/<task>/<prefix model>/<episode id>/<T>-<params digest>`.
//! Files are written to a temporary sibling and moved into place without
//! clobbering, so a reader sees either nothing or a complete entry.
//!
//! Entry layout (bytes):
//!
//! ```text
//! SWITCHBENCH-PREFIX-CACHE 1\n
//! <header JSON on one line>\n
//! <byte length of text 1>\n<text 1>\n
//! ...
//! <byte length of text T>\n<text T>\n
//! ```

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, ChatBackend, ChatRequest, GenerationParams};
use crate::digest::framed_digest;
use crate::model::{Episode, ModelId, Task, Transcript};

const MAGIC: &str = "SWITCHBENCH-PREFIX-CACHE 1";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub task: Task,
    pub episode_id: String,
    pub prefix_model: ModelId,
    pub prefix_turns: usize,
    pub params_digest: String,
}

impl CacheKey {
    pub fn validate(&self) -> Result<(), CacheError> {
        if self.episode_id.is_empty()
            || self.prefix_model.name.is_empty()
            || self.params_digest.is_empty()
        {
            return Err(CacheError::InvalidKey("empty key field".into()));
        }
        if self.prefix_turns < 1 {
            return Err(CacheError::InvalidKey("prefix_turns must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheEntry {
    pub key: CacheKey,
    pub assistant_texts: Vec<String>,
    pub created_at: String,
    pub checksum: String,
}

impl CacheEntry {
    pub fn new(key: CacheKey, assistant_texts: Vec<String>) -> Self {
        let checksum = checksum(&assistant_texts);
        Self {
            key,
            assistant_texts,
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            checksum,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            task: self.key.task,
            episode_id: self.key.episode_id.clone(),
            prefix_provider: self.key.prefix_model.provider.clone(),
            prefix_model: self.key.prefix_model.name.clone(),
            prefix_turns: self.key.prefix_turns,
            params_digest: self.key.params_digest.clone(),
            created_at: self.created_at.clone(),
            checksum: self.checksum.clone(),
            count: self.assistant_texts.len(),
        };
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC.as_bytes());
        out.push(b'\n');
        out.extend_from_slice(serde_json::to_string(&header).expect("header").as_bytes());
        out.push(b'\n');
        for text in &self.assistant_texts {
            out.extend_from_slice(text.len().to_string().as_bytes());
            out.push(b'\n');
            out.extend_from_slice(text.as_bytes());
            out.push(b'\n');
        }
        out
    }

    /// Parses and verifies an entry. The checksum is checked here, so a
    /// returned entry is always intact.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        let mut rest = bytes;
        let magic = take_line(&mut rest).ok_or("missing magic line")?;
        if magic != MAGIC.as_bytes() {
            return Err("bad magic line".into());
        }
        let header_line = take_line(&mut rest).ok_or("missing header")?;
        let header: Header =
            serde_json::from_slice(header_line).map_err(|e| format!("bad header: {e}"))?;
        let mut texts = Vec::with_capacity(header.count);
        for i in 0..header.count {
            let len_line =
                take_line(&mut rest).ok_or_else(|| format!("missing length of text {i}"))?;
            let len: usize = std::str::from_utf8(len_line)
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| format!("bad length of text {i}"))?;
            if rest.len() < len + 1 || rest[len] != b'\n' {
                return Err(format!("text {i} truncated"));
            }
            let text =
                std::str::from_utf8(&rest[..len]).map_err(|_| format!("text {i} is not UTF-8"))?;
            texts.push(text.to_string());
            rest = &rest[len + 1..];
        }
        if !rest.is_empty() {
            return Err("trailing bytes after last text".into());
        }
        if header.count != header.prefix_turns {
            return Err(format!(
                "entry holds {} texts but prefix_turns is {}",
                header.count, header.prefix_turns
            ));
        }
        if checksum(&texts) != header.checksum {
            return Err("checksum mismatch".into());
        }
        Ok(CacheEntry {
            key: CacheKey {
                task: header.task,
                episode_id: header.episode_id,
                prefix_model: ModelId::new(header.prefix_provider, header.prefix_model),
                prefix_turns: header.prefix_turns,
                params_digest: header.params_digest,
            },
            assistant_texts: texts,
            created_at: header.created_at,
            checksum: header.checksum,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    task: Task,
    episode_id: String,
    prefix_provider: String,
    prefix_model: String,
    prefix_turns: usize,
    params_digest: String,
    created_at: String,
    checksum: String,
    count: usize,
}

fn take_line<'a>(rest: &mut &'a [u8]) -> Option<&'a [u8]> {
    let pos = rest.iter().position(|&b| b == b'\n')?;
    let line = &rest[..pos];
    *rest = &rest[pos + 1..];
    Some(line)
}

fn checksum(texts: &[String]) -> String {
    framed_digest(texts.iter().map(|t| t.as_bytes()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionPolicy {
    #[default]
    Fail,
    Regenerate,
}

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("invalid cache key: {0}")]
    InvalidKey(String),
    #[error("cache precondition violated: {0}")]
    Precondition(String),
    #[error(
        "corrupt cache entry {path}: {reason} (rerun with --regenerate-corrupt to rebuild it)"
    )]
    Corrupt { path: PathBuf, reason: String },
    #[error("cache entry {0} already exists; entries are write-once")]
    AlreadyExists(PathBuf),
    #[error("cache I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CacheError + '_ {
    move |source| CacheError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    /// Assistant turns generated to fill misses.
    pub generated_turns: u64,
    pub regenerated_corrupt: u64,
}

pub struct PrefixCache {
    root: PathBuf,
    policy: CorruptionPolicy,
    in_flight: Mutex<HashMap<CacheKey, Arc<Mutex<()>>>>,
    hits: AtomicU64,
    misses: AtomicU64,
    generated_turns: AtomicU64,
    regenerated: AtomicU64,
}

impl PrefixCache {
    pub fn open(root: impl Into<PathBuf>, policy: CorruptionPolicy) -> Result<Self, CacheError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Self {
            root,
            policy,
            in_flight: Mutex::new(HashMap::new()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            generated_turns: AtomicU64::new(0),
            regenerated: AtomicU64::new(0),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::SeqCst),
            misses: self.misses.load(Ordering::SeqCst),
            generated_turns: self.generated_turns.load(Ordering::SeqCst),
            regenerated_corrupt: self.regenerated.load(Ordering::SeqCst),
        }
    }

    fn model_dir(&self, task: Task, model: &str) -> PathBuf {
        self.root.join(task.as_str()).join(path_component(model))
    }

    pub fn entry_path(&self, key: &CacheKey) -> PathBuf {
        self.model_dir(key.task, &key.prefix_model.name)
            .join(path_component(&key.episode_id))
            .join(format!(
                "{}-{}",
                key.prefix_turns,
                path_component(&key.params_digest)
            ))
    }

    /// Reads an entry if present. A damaged file is always an error here;
    /// the corruption policy applies in [`PrefixCache::get_or_generate`].
    pub fn read(&self, key: &CacheKey) -> Result<Option<CacheEntry>, CacheError> {
        let path = self.entry_path(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(io_err(&path)(e)),
        };
        let entry = CacheEntry::from_bytes(&bytes).map_err(|reason| CacheError::Corrupt {
            path: path.clone(),
            reason,
        })?;
        if &entry.key != key {
            return Err(CacheError::Corrupt {
                path,
                reason: "header key does not match file location".into(),
            });
        }
        Ok(Some(entry))
    }

    /// Persists a new entry. Fails if one already exists for the key.
    pub fn insert(&self, entry: &CacheEntry) -> Result<(), CacheError> {
        entry.key.validate()?;
        if entry.assistant_texts.len() != entry.key.prefix_turns {
            return Err(CacheError::InvalidKey(format!(
                "{} texts for prefix_turns {}",
                entry.assistant_texts.len(),
                entry.key.prefix_turns
            )));
        }
        let path = self.entry_path(&entry.key);
        let dir = path.parent().expect("entry path has a parent");
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
        tmp.write_all(&entry.to_bytes()).map_err(io_err(&path))?;
        tmp.as_file().sync_all().map_err(io_err(&path))?;
        match tmp.persist_noclobber(&path) {
            Ok(_) => Ok(()),
            Err(e) if e.error.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(CacheError::AlreadyExists(path))
            }
            Err(e) => Err(io_err(&path)(e.error)),
        }
    }

    fn remove_corrupt(&self, key: &CacheKey) -> Result<(), CacheError> {
        let path = self.entry_path(key);
        match fs::remove_file(&path) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    /// Returns the first `T` assistant turns for `key`, generating and
    /// persisting them on a miss. Concurrent misses for one key within this
    /// process generate once.
    pub fn get_or_generate(
        &self,
        key: &CacheKey,
        episode: &Episode,
        backend: &dyn ChatBackend,
        params: &GenerationParams,
    ) -> Result<Vec<String>, CacheError> {
        key.validate()?;
        if key.task != episode.task || key.episode_id != episode.episode_id {
            return Err(CacheError::Precondition(format!(
                "key ({}, {}) does not match episode ({}, {})",
                key.task, key.episode_id, episode.task, episode.episode_id
            )));
        }
        if key.prefix_turns >= episode.turns() {
            return Err(CacheError::Precondition(format!(
                "prefix_turns {} must be below episode length {}",
                key.prefix_turns,
                episode.turns()
            )));
        }
        if key.params_digest != params.digest() {
            return Err(CacheError::Precondition(
                "params_digest does not match generation parameters".into(),
            ));
        }

        let guard = {
            let mut map = self.in_flight.lock().unwrap();
            map.entry(key.clone()).or_default().clone()
        };
        let _held = guard.lock().unwrap();

        match self.read(key) {
            Ok(Some(entry)) => {
                self.hits.fetch_add(1, Ordering::SeqCst);
                return Ok(entry.assistant_texts);
            }
            Ok(None) => {}
            Err(CacheError::Corrupt { path, reason }) => {
                if self.policy == CorruptionPolicy::Fail {
                    return Err(CacheError::Corrupt { path, reason });
                }
                log::warn!(
                    "regenerating corrupt cache entry {}: {reason}",
                    path.display()
                );
                self.remove_corrupt(key)?;
                self.regenerated.fetch_add(1, Ordering::SeqCst);
            }
            Err(e) => return Err(e),
        }

        self.misses.fetch_add(1, Ordering::SeqCst);
        let texts = generate_prefix(key, episode, backend, params)?;
        self.generated_turns
            .fetch_add(texts.len() as u64, Ordering::SeqCst);
        let entry = CacheEntry::new(key.clone(), texts);
        match self.insert(&entry) {
            Ok(()) => Ok(entry.assistant_texts),
            // Another process won the race; its entry is authoritative.
            Err(CacheError::AlreadyExists(_)) => match self.read(key)? {
                Some(existing) => Ok(existing.assistant_texts),
                None => Ok(entry.assistant_texts),
            },
            Err(e) => Err(e),
        }
    }

    /// All intact entries for a (task, prefix model) pair, optionally
    /// filtered by switch depth and parameter digest, ordered by episode id.
    pub fn entries_for(
        &self,
        task: Task,
        prefix_model: &str,
        prefix_turns: Option<usize>,
        params_digest: Option<&str>,
    ) -> Result<Vec<CacheEntry>, CacheError> {
        let dir = self.model_dir(task, prefix_model);
        let mut entries = Vec::new();
        let episodes = match fs::read_dir(&dir) {
            Ok(rd) => rd,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(entries),
            Err(e) => return Err(io_err(&dir)(e)),
        };
        for episode_dir in episodes {
            let episode_dir = episode_dir.map_err(io_err(&dir))?.path();
            if !episode_dir.is_dir() {
                continue;
            }
            for file in fs::read_dir(&episode_dir).map_err(io_err(&episode_dir))? {
                let path = file.map_err(io_err(&episode_dir))?.path();
                let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
                if name.starts_with('.') || !path.is_file() {
                    continue;
                }
                let bytes = fs::read(&path).map_err(io_err(&path))?;
                let entry =
                    CacheEntry::from_bytes(&bytes).map_err(|reason| CacheError::Corrupt {
                        path: path.clone(),
                        reason,
                    })?;
                if prefix_turns.is_some_and(|t| t != entry.key.prefix_turns) {
                    continue;
                }
                if params_digest.is_some_and(|d| d != entry.key.params_digest) {
                    continue;
                }
                entries.push(entry);
            }
        }
        entries.sort_by(|a, b| a.key.episode_id.cmp(&b.key.episode_id));
        Ok(entries)
    }
}

/// Generates assistant turns 1..=T with the prefix model, each conditioned
/// on everything generated before it.
fn generate_prefix(
    key: &CacheKey,
    episode: &Episode,
    backend: &dyn ChatBackend,
    params: &GenerationParams,
) -> Result<Vec<String>, BackendError> {
    let mut transcript = Transcript::new();
    let mut texts = Vec::with_capacity(key.prefix_turns);
    for user_turn in episode.user_turns.iter().take(key.prefix_turns) {
        transcript.push_user(user_turn.clone());
        let generation = backend.generate(&ChatRequest {
            model: &key.prefix_model,
            transcript: &transcript,
            params,
            task: episode.task,
            episode_id: &episode.episode_id,
        })?;
        transcript.push_assistant(generation.text.clone(), key.prefix_model.clone());
        texts.push(generation.text);
    }
    Ok(texts)
}

/// Maps an arbitrary string to a safe single path component. Characters
/// outside `[A-Za-z0-9._-]` are percent-encoded, and so is a leading dot.
fn path_component(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for (i, b) in s.bytes().enumerate() {
        let safe = b.is_ascii_alphanumeric() || b == b'-' || b == b'_' || (b == b'.' && i > 0);
        if safe {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{Generation, MockBackend};
    use crate::model::Gold;
    use proptest::prelude::*;
    use std::sync::atomic::AtomicUsize;

    struct Counting {
        inner: MockBackend,
        calls: AtomicUsize,
    }

    impl Counting {
        fn new() -> Self {
            Self {
                inner: MockBackend::default(),
                calls: AtomicUsize::new(0),
            }
        }
        fn calls(&self) -> usize {
            self.calls.load(Ordering::SeqCst)
        }
    }

    impl ChatBackend for Counting {
        fn generate(&self, r: &ChatRequest<'_>) -> Result<Generation, BackendError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            std::thread::sleep(std::time::Duration::from_millis(1));
            self.inner.generate(r)
        }
    }

    fn episode(id: &str, turns: usize) -> Episode {
        Episode {
            task: Task::Coqa,
            episode_id: id.into(),
            user_turns: (0..turns).map(|i| format!("question {i}?")).collect(),
            gold: Gold::Coqa {
                answers: vec![vec!["x".into()]; turns],
            },
        }
    }

    fn key(model: &str, id: &str, t: usize) -> CacheKey {
        CacheKey {
            task: Task::Coqa,
            episode_id: id.into(),
            prefix_model: ModelId::new("mock", model),
            prefix_turns: t,
            params_digest: GenerationParams::default().digest(),
        }
    }

    #[test]
    fn miss_then_hit() {
        let dir = tempfile::tempdir().unwrap();
        let cache = PrefixCache::open(dir.path(), CorruptionPolicy::Fail).unwrap();
        let backend = Counting::new();
        let ep = episode("e1", 4);
        let params = GenerationParams::default();
        let first = cache
            .get_or_generate(&key("m1", "e1", 2), &ep, &backend, &params)
            .unwrap();
        assert_eq!(first.len(), 2);
        assert_eq!(backend.calls(), 2);
        let second = cache
            .get_or_generate(&key("m1", "e1", 2), &ep, &backend, &params)
            .unwrap();
        assert_eq!(first, second);
        assert_eq!(backend.calls(), 2);
        assert_eq!(cache.stats().hits, 1);
        assert_eq!(cache.stats().misses, 1);
    }

    #[test]
    fn keys_differing_in_model_are_independent() {
        let dir = tempfile::tempdir().unwrap();
        let cache = PrefixCache::open(dir.path(), CorruptionPolicy::Fail).unwrap();
        let backend = Counting::new();
        let ep = episode("e1", 4);
        let params = GenerationParams::default();
        let a = cache
            .get_or_generate(&key("m1", "e1", 3), &ep, &backend, &params)
            .unwrap();
        let b = cache
            .get_or_generate(&key("m2", "e1", 3), &ep, &backend, &params)
            .unwrap();
        assert_ne!(a, b);
        assert_ne!(
            cache.entry_path(&key("m1", "e1", 3)),
            cache.entry_path(&key("m2", "e1", 3))
        );
        assert_eq!(backend.calls(), 6);
    }

    #[test]
    fn concurrent_misses_generate_once() {
        let dir = tempfile::tempdir().unwrap();
        let cache = PrefixCache::open(dir.path(), CorruptionPolicy::Fail).unwrap();
        let backend = Counting::new();
        let ep = episode("e1", 10);
        let params = GenerationParams::default();
        let k = key("m1", "e1", 9);
        let results: Vec<Vec<String>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..8)
                .map(|_| s.spawn(|| cache.get_or_generate(&k, &ep, &backend, &params).unwrap()))
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert!(results.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(backend.calls(), 9);
    }

    #[test]
    fn entries_are_write_once() {
        let dir = tempfile::tempdir().unwrap();
        let cache = PrefixCache::open(dir.path(), CorruptionPolicy::Fail).unwrap();
        let entry = CacheEntry::new(key("m1", "e1", 1), vec!["a".into()]);
        cache.insert(&entry).unwrap();
        let again = CacheEntry::new(key("m1", "e1", 1), vec!["b".into()]);
        assert!(matches!(
            cache.insert(&again),
            Err(CacheError::AlreadyExists(_))
        ));
        assert_eq!(
            cache.read(&entry.key).unwrap().unwrap().assistant_texts,
            vec!["a"]
        );
    }

    #[test]
    fn corruption_fails_loudly_by_default() {
        let dir = tempfile::tempdir().unwrap();
        let cache = PrefixCache::open(dir.path(), CorruptionPolicy::Fail).unwrap();
        let backend = Counting::new();
        let ep = episode("e1", 4);
        let params = GenerationParams::default();
        let k = key("m1", "e1", 2);
        cache.get_or_generate(&k, &ep, &backend, &params).unwrap();
        let path = cache.entry_path(&k);
        let mut bytes = fs::read(&path).unwrap();
        let last = bytes.len() - 2;
        bytes[last] ^= 0x01;
        fs::write(&path, &bytes).unwrap();
        let err = cache
            .get_or_generate(&k, &ep, &backend, &params)
            .unwrap_err();
        match err {
            CacheError::Corrupt { path: p, .. } => assert_eq!(p, path),
            other => panic!("unexpected {other}"),
        }

        let lenient = PrefixCache::open(dir.path(), CorruptionPolicy::Regenerate).unwrap();
        let texts = lenient.get_or_generate(&k, &ep, &backend, &params).unwrap();
        assert_eq!(texts.len(), 2);
        assert_eq!(lenient.stats().regenerated_corrupt, 1);
        assert!(cache.read(&k).unwrap().is_some());
    }

    #[test]
    fn preconditions_are_checked() {
        let dir = tempfile::tempdir().unwrap();
        let cache = PrefixCache::open(dir.path(), CorruptionPolicy::Fail).unwrap();
        let backend = Counting::new();
        let params = GenerationParams::default();
        let ep = episode("e1", 3);
        assert!(matches!(
            cache.get_or_generate(&key("m", "e1", 3), &ep, &backend, &params),
            Err(CacheError::Precondition(_))
        ));
        assert!(matches!(
            cache.get_or_generate(&key("m", "other", 1), &ep, &backend, &params),
            Err(CacheError::Precondition(_))
        ));
        assert!(matches!(
            cache.get_or_generate(&key("m", "e1", 0), &ep, &backend, &params),
            Err(CacheError::InvalidKey(_))
        ));
        assert_eq!(backend.calls(), 0);
    }

    #[test]
    fn path_components_are_sanitized() {
        assert_eq!(path_component("qwen/qwen-2.5"), "qwen%2Fqwen-2.5");
        assert_eq!(path_component(".."), "%2E.");
        assert_eq!(
            path_component("gpt-5-nano-2025-08-07"),
            "gpt-5-nano-2025-08-07"
        );
    }

    #[test]
    fn entries_for_lists_a_prefix_model() {
        let dir = tempfile::tempdir().unwrap();
        let cache = PrefixCache::open(dir.path(), CorruptionPolicy::Fail).unwrap();
        let backend = Counting::new();
        let params = GenerationParams::default();
        for id in ["e2", "e1"] {
            cache
                .get_or_generate(&key("m1", id, 2), &episode(id, 3), &backend, &params)
                .unwrap();
        }
        cache
            .get_or_generate(&key("m2", "e1", 2), &episode("e1", 3), &backend, &params)
            .unwrap();
        let entries = cache.entries_for(Task::Coqa, "m1", Some(2), None).unwrap();
        let ids: Vec<_> = entries.iter().map(|e| e.key.episode_id.as_str()).collect();
        assert_eq!(ids, ["e1", "e2"]);
        assert!(cache
            .entries_for(Task::Coqa, "m1", Some(1), None)
            .unwrap()
            .is_empty());
        assert!(cache
            .entries_for(Task::MultiIf, "m1", None, None)
            .unwrap()
            .is_empty());
    }

    proptest! {
        #[test]
        fn entry_bytes_roundtrip(texts in proptest::collection::vec("\\PC{0,40}|[\\n\\r ]{0,3}", 1..6)) {
            let k = key("m", "e", texts.len());
            let entry = CacheEntry::new(k, texts);
            let bytes = entry.to_bytes();
            let back = CacheEntry::from_bytes(&bytes).unwrap();
            prop_assert_eq!(&back, &entry);
            prop_assert_eq!(back.to_bytes(), bytes);
        }
    }
}
