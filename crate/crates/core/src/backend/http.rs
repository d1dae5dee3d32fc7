//! Chat-completions client for OpenAI-compatible HTTP endpoints.

use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{
    check_request, BackendError, ChatBackend, ChatRequest, ConcurrencyLimiter, Generation,
    GenerationParams, ReasoningEffort, Verbosity,
};
use crate::model::Transcript;

/// Request-shape family. Field names can still be overridden per backend.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dialect {
    /// OpenAI chat completions: `max_completion_tokens`, `reasoning_effort`, `verbosity`.
    Openai,
    /// Plain chat completions: `max_tokens`, no reasoning or verbosity controls.
    #[default]
    Generic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            backoff_base_ms: 500,
            max_backoff_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based), with ±50% jitter.
    fn backoff(&self, retry: u32) -> Duration {
        let exp = self
            .backoff_base_ms
            .saturating_mul(1u64 << (retry - 1).min(20))
            .min(self.max_backoff_ms);
        let jitter: f64 = rand::rng().random_range(0.5..1.5);
        Duration::from_millis((exp as f64 * jitter) as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpBackendConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default)]
    pub dialect: Dialect,
    /// Overrides; an empty string omits the field from requests.
    #[serde(default)]
    pub max_tokens_field: Option<String>,
    #[serde(default)]
    pub reasoning_effort_field: Option<String>,
    #[serde(default)]
    pub verbosity_field: Option<String>,
    #[serde(default)]
    pub send_temperature: Option<bool>,
}

fn default_timeout() -> u64 {
    120
}

fn default_concurrency() -> usize {
    8
}

impl HttpBackendConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key_env: None,
            timeout_secs: default_timeout(),
            retry: RetryPolicy::default(),
            max_concurrency: default_concurrency(),
            dialect: Dialect::default(),
            max_tokens_field: None,
            reasoning_effort_field: None,
            verbosity_field: None,
            send_temperature: None,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")) {
            errors.push(format!(
                "endpoint `{}` is not an http(s) URL",
                self.endpoint
            ));
        }
        if self.retry.max_attempts < 1 {
            errors.push("retry.max_attempts must be >= 1".into());
        }
        if self.max_concurrency < 1 {
            errors.push("max_concurrency must be >= 1".into());
        }
        if let Some(var) = &self.api_key_env {
            if std::env::var_os(var).is_none() {
                errors.push(format!("credential variable {var} is not set"));
            }
        }
        errors
    }

    fn field(&self, overridden: &Option<String>, dialect_default: Option<&str>) -> Option<String> {
        match overridden {
            Some(name) if name.is_empty() => None,
            Some(name) => Some(name.clone()),
            None => dialect_default.map(str::to_string),
        }
    }

    fn max_tokens_name(&self) -> Option<String> {
        let default = match self.dialect {
            Dialect::Openai => "max_completion_tokens",
            Dialect::Generic => "max_tokens",
        };
        self.field(&self.max_tokens_field, Some(default))
    }

    fn reasoning_name(&self) -> Option<String> {
        let default = (self.dialect == Dialect::Openai).then_some("reasoning_effort");
        self.field(&self.reasoning_effort_field, default)
    }

    fn verbosity_name(&self) -> Option<String> {
        let default = (self.dialect == Dialect::Openai).then_some("verbosity");
        self.field(&self.verbosity_field, default)
    }
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    limiter: ConcurrencyLimiter,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let errors = config.validate();
        if !errors.is_empty() {
            return Err(BackendError::Config(errors.join("; ")));
        }
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                BackendError::Config(format!("credential variable {var} is not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(format!("cannot build HTTP client: {e}")))?;
        let limiter = ConcurrencyLimiter::new(config.max_concurrency);
        Ok(Self {
            config,
            api_key,
            client,
            limiter,
        })
    }

    /// JSON body for one request. Parameters the endpoint does not support
    /// are left out entirely.
    pub fn request_body(
        &self,
        model: &str,
        transcript: &Transcript,
        params: &GenerationParams,
    ) -> Value {
        build_body(&self.config, model, transcript, params)
    }

    fn send_once(&self, body: &Value) -> Result<Generation, Attempt> {
        let mut req = self.client.post(&self.config.endpoint).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| Attempt::Retry(format!("transport error: {e}"), None))?;
        let status = resp.status().as_u16();
        // Only the delta-seconds form; HTTP dates are rare from API gateways.
        let retry_after = resp
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = resp
            .text()
            .map_err(|e| Attempt::Retry(format!("error reading body: {e}"), None))?;
        match status {
            200..=299 => parse_response(&text).map_err(Attempt::Fail),
            401 | 403 => Err(Attempt::Fail(BackendError::Auth {
                endpoint: self.config.endpoint.clone(),
                message: truncate(&text, 300),
            })),
            429 | 500..=599 => Err(Attempt::Retry(
                format!("status {status}: {}", truncate(&text, 200)),
                retry_after,
            )),
            _ => Err(Attempt::Fail(BackendError::Rejected {
                status,
                body: truncate(&text, 500),
            })),
        }
    }
}

enum Attempt {
    /// Retryable failure, with the server's requested wait if it sent one.
    Retry(String, Option<Duration>),
    Fail(BackendError),
}

impl ChatBackend for HttpBackend {
    fn generate(&self, request: &ChatRequest<'_>) -> Result<Generation, BackendError> {
        check_request(request)?;
        let body = self.request_body(&request.model.name, request.transcript, request.params);
        let _permit = self.limiter.acquire();
        let mut log = Vec::new();
        let mut server_wait = None;
        for attempt in 1..=self.config.retry.max_attempts {
            if attempt > 1 {
                let cap = Duration::from_millis(self.config.retry.max_backoff_ms);
                let backoff = self.config.retry.backoff(attempt - 1);
                let wait: Option<Duration> = server_wait.take();
                std::thread::sleep(wait.map_or(backoff, |w| w.min(cap).max(backoff)));
            }
            match self.send_once(&body) {
                Ok(g) => return Ok(g),
                Err(Attempt::Fail(e)) => return Err(e),
                Err(Attempt::Retry(msg, wait)) => {
                    server_wait = wait;
                    log::warn!(
                        "{} attempt {attempt}/{} failed: {msg}",
                        request.model.name,
                        self.config.retry.max_attempts
                    );
                    log.push(format!("attempt {attempt}: {msg}"));
                }
            }
        }
        Err(BackendError::RetriesExhausted { attempts: log })
    }
}

fn build_body(
    config: &HttpBackendConfig,
    model: &str,
    transcript: &Transcript,
    params: &GenerationParams,
) -> Value {
    let messages: Vec<Value> = transcript
        .messages
        .iter()
        .map(|m| json!({"role": m.role.as_str(), "content": m.text}))
        .collect();
    let mut body = Map::new();
    body.insert("model".into(), json!(model));
    body.insert("messages".into(), Value::Array(messages));
    if config.send_temperature.unwrap_or(true) {
        body.insert("temperature".into(), json!(params.temperature));
    }
    if let Some(field) = config.max_tokens_name() {
        body.insert(field, json!(params.max_output_tokens));
    }
    if params.reasoning_effort == ReasoningEffort::Low {
        if let Some(field) = config.reasoning_name() {
            body.insert(field, json!("low"));
        }
    }
    if params.verbosity == Verbosity::Low {
        if let Some(field) = config.verbosity_name() {
            body.insert(field, json!("low"));
        }
    }
    Value::Object(body)
}

fn parse_response(text: &str) -> Result<Generation, BackendError> {
    let v: Value = serde_json::from_str(text)
        .map_err(|e| BackendError::Malformed(format!("invalid JSON: {e}")))?;
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| BackendError::Malformed("response has no choices".into()))?;
    let message = choice.get("message");
    let refusal = message
        .and_then(|m| m.get("refusal"))
        .and_then(Value::as_str)
        .is_some_and(|s| !s.is_empty())
        || choice.get("finish_reason").and_then(Value::as_str) == Some("content_filter");
    if refusal {
        return Ok(Generation {
            text: String::new(),
            refusal: true,
        });
    }
    let content = message.and_then(|m| m.get("content"));
    let text = match content {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Null) | None => String::new(),
        // Some gateways return content as an array of typed parts.
        Some(Value::Array(parts)) => parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect(),
        Some(other) => {
            return Err(BackendError::Malformed(format!(
                "unexpected content {other}"
            )))
        }
    };
    Ok(Generation::text(text))
}

fn truncate(s: &str, max: usize) -> String {
    if s.len() <= max {
        return s.to_string();
    }
    let mut end = max;
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    format!("{}…", &s[..end])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelId;

    fn transcript() -> Transcript {
        let mut t = Transcript::new();
        t.push_user("Q1?");
        t.push_assistant("A1", ModelId::new("x", "m"));
        t.push_user("Q2?");
        t
    }

    #[test]
    fn openai_dialect_sends_reasoning_and_verbosity() {
        let mut cfg = HttpBackendConfig::new("http://localhost/v1/chat/completions");
        cfg.dialect = Dialect::Openai;
        let body = build_body(&cfg, "gpt", &transcript(), &GenerationParams::default());
        assert_eq!(body["reasoning_effort"], "low");
        assert_eq!(body["verbosity"], "low");
        assert_eq!(body["max_completion_tokens"], 2048);
        assert_eq!(body["messages"].as_array().unwrap().len(), 3);
        assert_eq!(body["messages"][1]["role"], "assistant");
    }

    #[test]
    fn generic_dialect_omits_unsupported_fields() {
        let cfg = HttpBackendConfig::new("http://localhost/v1/chat/completions");
        let body = build_body(&cfg, "m", &transcript(), &GenerationParams::default());
        assert!(body.get("reasoning_effort").is_none());
        assert!(body.get("verbosity").is_none());
        assert_eq!(body["max_tokens"], 2048);
        assert_eq!(body["temperature"], 0.0);
    }

    #[test]
    fn overrides_rename_and_drop_fields() {
        let mut cfg = HttpBackendConfig::new("http://localhost/x");
        cfg.dialect = Dialect::Openai;
        cfg.verbosity_field = Some(String::new());
        cfg.reasoning_effort_field = Some("effort".into());
        cfg.send_temperature = Some(false);
        let body = build_body(&cfg, "m", &transcript(), &GenerationParams::default());
        assert!(body.get("verbosity").is_none());
        assert!(body.get("temperature").is_none());
        assert_eq!(body["effort"], "low");
    }

    #[test]
    fn unset_params_are_not_sent() {
        let mut cfg = HttpBackendConfig::new("http://localhost/x");
        cfg.dialect = Dialect::Openai;
        let params = GenerationParams {
            reasoning_effort: ReasoningEffort::Unset,
            verbosity: Verbosity::Unset,
            ..GenerationParams::default()
        };
        let body = build_body(&cfg, "m", &transcript(), &params);
        assert!(body.get("reasoning_effort").is_none());
        assert!(body.get("verbosity").is_none());
    }

    #[test]
    fn response_text_is_not_trimmed() {
        let g = parse_response(
            r#"{"choices":[{"message":{"content":"  hi \n"},"finish_reason":"stop"}]}"#,
        )
        .unwrap();
        assert_eq!(g.text, "  hi \n");
        assert!(!g.refusal);
    }

    #[test]
    fn refusals_are_flagged() {
        let g =
            parse_response(r#"{"choices":[{"message":{"content":null,"refusal":"no"}}]}"#).unwrap();
        assert!(g.refusal);
        assert_eq!(g.text, "");
        let g = parse_response(
            r#"{"choices":[{"message":{"content":"partial"},"finish_reason":"content_filter"}]}"#,
        )
        .unwrap();
        assert!(g.refusal);
    }

    #[test]
    fn malformed_responses_error() {
        assert!(parse_response("not json").is_err());
        assert!(parse_response(r#"{"choices":[]}"#).is_err());
    }

    #[test]
    fn backoff_grows_and_caps() {
        let p = RetryPolicy {
            max_attempts: 5,
            backoff_base_ms: 100,
            max_backoff_ms: 1000,
        };
        assert!(p.backoff(1) <= Duration::from_millis(150));
        assert!(p.backoff(1) >= Duration::from_millis(50));
        assert!(p.backoff(10) <= Duration::from_millis(1500));
    }
}
