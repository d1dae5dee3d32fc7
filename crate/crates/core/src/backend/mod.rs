//! Uniform chat-completion interface over remote endpoints and the mock.

mod http;
mod mock;

use std::collections::HashMap;
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::sha256_hex;
use crate::model::{ModelId, Role, Task, Transcript};

pub use http::{Dialect, HttpBackend, HttpBackendConfig, RetryPolicy};
pub use mock::{MockBackend, MockScript, ScriptEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReasoningEffort {
    Low,
    Unset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verbosity {
    Low,
    Unset,
}

/// Sampling parameters sent with every request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub reasoning_effort: ReasoningEffort,
    pub verbosity: Verbosity,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_output_tokens: 2048,
            reasoning_effort: ReasoningEffort::Low,
            verbosity: Verbosity::Low,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), String> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            ));
        }
        if self.max_output_tokens < 1 {
            return Err("max_output_tokens must be >= 1".into());
        }
        Ok(())
    }

    /// Short stable digest; part of every cache key and result record.
    pub fn digest(&self) -> String {
        // Field order is fixed by the struct definition, so the JSON is canonical.
        let json = serde_json::to_string(self).expect("params serialize");
        sha256_hex(json.as_bytes())[..16].to_string()
    }
}

/// Everything a backend needs to produce the next assistant turn.
#[derive(Debug, Clone, Copy)]
pub struct ChatRequest<'a> {
    pub model: &'a ModelId,
    pub transcript: &'a Transcript,
    pub params: &'a GenerationParams,
    pub task: Task,
    pub episode_id: &'a str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generation {
    pub text: String,
    /// The endpoint refused; `text` is empty and still gets scored.
    pub refusal: bool,
}

impl Generation {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            refusal: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("request failed after {} attempt(s): {}", attempts.len(), attempts.join("; "))]
    RetriesExhausted { attempts: Vec<String> },
    #[error("authentication failed for {endpoint}: {message}")]
    Auth { endpoint: String, message: String },
    #[error("backend configuration error: {0}")]
    Config(String),
    #[error("endpoint rejected request with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl BackendError {
    /// Fatal errors abort a run; everything else fails a single cell.
    pub fn is_fatal(&self) -> bool {
        matches!(self, BackendError::Auth { .. } | BackendError::Config(_))
    }
}

pub trait ChatBackend: Send + Sync {
    fn generate(&self, request: &ChatRequest<'_>) -> Result<Generation, BackendError>;
}

impl<T: ChatBackend + ?Sized> ChatBackend for Arc<T> {
    fn generate(&self, request: &ChatRequest<'_>) -> Result<Generation, BackendError> {
        (**self).generate(request)
    }
}

pub(crate) fn check_request(request: &ChatRequest<'_>) -> Result<(), BackendError> {
    if request.transcript.last_role() != Some(Role::User) {
        return Err(BackendError::InvalidRequest(
            "transcript must end with a user message".into(),
        ));
    }
    Ok(())
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
pub struct ConcurrencyLimiter {
    limit: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl ConcurrencyLimiter {
    pub fn new(limit: usize) -> Self {
        assert!(limit >= 1, "concurrency bound must be at least 1");
        Self {
            limit,
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap();
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        Permit { limiter: self }
    }
}

pub struct Permit<'a> {
    limiter: &'a ConcurrencyLimiter,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.limiter.in_flight.lock().unwrap();
        *n -= 1;
        self.limiter.freed.notify_one();
    }
}

/// Wraps any backend with a per-instance concurrency bound.
pub struct BoundedBackend<B> {
    inner: B,
    limiter: ConcurrencyLimiter,
}

impl<B: ChatBackend> BoundedBackend<B> {
    pub fn new(inner: B, max_in_flight: usize) -> Self {
        Self {
            inner,
            limiter: ConcurrencyLimiter::new(max_in_flight),
        }
    }
}

impl<B: ChatBackend> ChatBackend for BoundedBackend<B> {
    fn generate(&self, request: &ChatRequest<'_>) -> Result<Generation, BackendError> {
        let _permit = self.limiter.acquire();
        self.inner.generate(request)
    }
}

/// Dispatches requests to a backend by model name.
#[derive(Default, Clone)]
pub struct ModelRouter {
    routes: HashMap<String, Arc<dyn ChatBackend>>,
}

impl ModelRouter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn route(&mut self, model: &str, backend: Arc<dyn ChatBackend>) {
        self.routes.insert(model.to_string(), backend);
    }
}

impl ChatBackend for ModelRouter {
    fn generate(&self, request: &ChatRequest<'_>) -> Result<Generation, BackendError> {
        match self.routes.get(&request.model.name) {
            Some(backend) => backend.generate(request),
            None => Err(BackendError::Config(format!(
                "no backend configured for model {}",
                request.model.name
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::time::Duration;

    struct Instrumented {
        current: AtomicUsize,
        peak: AtomicUsize,
    }

    impl ChatBackend for Instrumented {
        fn generate(&self, _: &ChatRequest<'_>) -> Result<Generation, BackendError> {
            let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(5));
            self.current.fetch_sub(1, Ordering::SeqCst);
            Ok(Generation::text("ok"))
        }
    }

    #[test]
    fn bounded_backend_caps_in_flight_requests() {
        let inner = Arc::new(Instrumented {
            current: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let bounded = BoundedBackend::new(inner.clone(), 2);
        let model = ModelId::new("mock", "m");
        let mut t = Transcript::new();
        t.push_user("hi");
        let params = GenerationParams::default();
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    for _ in 0..4 {
                        let req = ChatRequest {
                            model: &model,
                            transcript: &t,
                            params: &params,
                            task: Task::Coqa,
                            episode_id: "e",
                        };
                        bounded.generate(&req).unwrap();
                    }
                });
            }
        });
        let peak = inner.peak.load(Ordering::SeqCst);
        assert!(peak <= 2, "peak in-flight {peak}");
        assert!(peak >= 1);
    }

    #[test]
    fn params_defaults_and_digest() {
        let p = GenerationParams::default();
        assert_eq!(p.temperature, 0.0);
        assert_eq!(p.max_output_tokens, 2048);
        assert!(p.validate().is_ok());
        assert_eq!(p.digest(), p.clone().digest());
        let mut q = p.clone();
        q.max_output_tokens = 100;
        assert_ne!(p.digest(), q.digest());
        q.temperature = -1.0;
        assert!(q.validate().is_err());
    }

    #[test]
    fn router_reports_unknown_model() {
        let router = ModelRouter::new();
        let model = ModelId::new("x", "nope");
        let mut t = Transcript::new();
        t.push_user("q");
        let params = GenerationParams::default();
        let err = router
            .generate(&ChatRequest {
                model: &model,
                transcript: &t,
                params: &params,
                task: Task::Coqa,
                episode_id: "e",
            })
            .unwrap_err();
        assert!(err.is_fatal());
    }
}
