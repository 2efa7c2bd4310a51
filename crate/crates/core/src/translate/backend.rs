//! Translation backends and the retry wrapper around them.

use std::collections::HashMap;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LanguageCode;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{message}")]
pub struct BackendError {
    pub message: String,
    /// Transient failures (timeouts, 5xx, rate limiting) are worth retrying.
    pub retryable: bool,
}

impl BackendError {
    pub fn transient(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: true,
        }
    }

    pub fn permanent(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: false,
        }
    }
}

/// Anything that turns text in one language into text in another.
///
/// Implementations must be deterministic for a fixed configuration.
pub trait TranslationBackend: Send + Sync {
    fn name(&self) -> &str;

    fn translate(
        &self,
        text: &str,
        source: LanguageCode,
        target: LanguageCode,
    ) -> Result<String, BackendError>;
}

/// Returns its input unchanged.
#[derive(Debug, Default, Clone, Copy)]
pub struct IdentityBackend;

impl TranslationBackend for IdentityBackend {
    fn name(&self) -> &str {
        "identity"
    }

    fn translate(&self, text: &str, _: LanguageCode, _: LanguageCode) -> Result<String, BackendError> {
        Ok(text.to_string())
    }
}

/// Lookup table keyed by `(target, source text)`.
#[derive(Debug, Default, Clone)]
pub struct TableBackend {
    entries: HashMap<(LanguageCode, String), String>,
    /// Fall back to the source text for missing entries instead of failing.
    passthrough: bool,
}

impl TableBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_passthrough(mut self, passthrough: bool) -> Self {
        self.passthrough = passthrough;
        self
    }

    pub fn insert(
        &mut self,
        target: LanguageCode,
        source_text: impl Into<String>,
        translation: impl Into<String>,
    ) -> &mut Self {
        self.entries
            .insert((target, source_text.into()), translation.into());
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl TranslationBackend for TableBackend {
    fn name(&self) -> &str {
        "table"
    }

    fn translate(
        &self,
        text: &str,
        _source: LanguageCode,
        target: LanguageCode,
    ) -> Result<String, BackendError> {
        match self.entries.get(&(target, text.to_string())) {
            Some(t) => Ok(t.clone()),
            None if self.passthrough => Ok(text.to_string()),
            None => Err(BackendError::permanent(format!(
                "no {target} entry for {text:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RemoteConfig {
    pub endpoint: String,
    /// Environment variable holding the API key.
    #[serde(default = "default_key_var")]
    pub api_key_env: String,
    #[serde(default = "default_rate")]
    pub requests_per_second: f64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_key_var() -> String {
    "MERA_TRANSLATE_API_KEY".into()
}

fn default_rate() -> f64 {
    10.0
}

fn default_timeout() -> u64 {
    30
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://translation.googleapis.com/language/translate/v2".into(),
            api_key_env: default_key_var(),
            requests_per_second: default_rate(),
            timeout_secs: default_timeout(),
        }
    }
}

/// Client for a Cloud-Translation-v2 style JSON endpoint.
pub struct RemoteBackend {
    config: RemoteConfig,
    api_key: String,
    agent: ureq::Agent,
    last_request: Mutex<Option<Instant>>,
}

#[derive(Serialize)]
struct TranslateRequest<'a> {
    q: &'a str,
    source: &'a str,
    target: &'a str,
    format: &'a str,
}

#[derive(Deserialize)]
struct TranslateResponse {
    data: TranslateData,
}

#[derive(Deserialize)]
struct TranslateData {
    translations: Vec<Translation>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Translation {
    translated_text: String,
}

impl RemoteBackend {
    /// Reads the API key from the configured environment variable.
    pub fn from_env(config: RemoteConfig) -> Result<Self, BackendError> {
        let api_key = std::env::var(&config.api_key_env).map_err(|_| {
            BackendError::permanent(format!(
                "environment variable {} is not set",
                config.api_key_env
            ))
        })?;
        Ok(Self::new(config, api_key))
    }

    pub fn new(config: RemoteConfig, api_key: String) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            config,
            api_key,
            agent,
            last_request: Mutex::new(None),
        }
    }

    fn throttle(&self) {
        if self.config.requests_per_second <= 0.0 {
            return;
        }
        let gap = Duration::from_secs_f64(1.0 / self.config.requests_per_second);
        let mut last = self.last_request.lock().expect("throttle lock");
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < gap {
                thread::sleep(gap - elapsed);
            }
        }
        *last = Some(Instant::now());
    }
}

impl TranslationBackend for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn translate(
        &self,
        text: &str,
        source: LanguageCode,
        target: LanguageCode,
    ) -> Result<String, BackendError> {
        self.throttle();
        let body = TranslateRequest {
            q: text,
            source: source.as_str(),
            target: target.as_str(),
            format: "text",
        };
        let mut response = self
            .agent
            .post(&self.config.endpoint)
            .query("key", &self.api_key)
            .send_json(&body)
            .map_err(|e| BackendError::transient(format!("request failed: {e}")))?;
        let status = response.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(BackendError::transient(format!("server answered {status}")));
        }
        if status >= 400 {
            return Err(BackendError::permanent(format!("server answered {status}")));
        }
        let parsed: TranslateResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::permanent(format!("unreadable response: {e}")))?;
        parsed
            .data
            .translations
            .into_iter()
            .next()
            .map(|t| t.translated_text)
            .ok_or_else(|| BackendError::permanent("response holds no translation"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_millis(200),
        }
    }
}

/// Calls the backend up to `policy.attempts` times, doubling the delay after
/// each transient failure. Empty output for non-empty input counts as a
/// permanent failure.
pub fn translate_with_retry(
    backend: &dyn TranslationBackend,
    policy: RetryPolicy,
    text: &str,
    source: LanguageCode,
    target: LanguageCode,
) -> Result<String, BackendError> {
    let attempts = policy.attempts.max(1);
    let mut delay = policy.base_delay;
    let mut last = None;
    for attempt in 1..=attempts {
        match backend.translate(text, source, target) {
            Ok(out) if out.trim().is_empty() && !text.trim().is_empty() => {
                return Err(BackendError::permanent(format!(
                    "{} returned empty text for {text:?}",
                    backend.name()
                )))
            }
            Ok(out) => return Ok(out),
            Err(e) if e.retryable && attempt < attempts => {
                log::warn!("{} attempt {attempt} failed: {e}", backend.name());
                thread::sleep(delay);
                delay *= 2;
                last = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or_else(|| BackendError::permanent("no attempts made")))
}
