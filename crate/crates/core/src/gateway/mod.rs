//! Chat-completion gateway: one abstraction over an OpenAI-compatible
//! HTTP backend and a deterministic offline mock, with retries, a bounded
//! in-flight window, and a provenance record for every successful call.

pub mod http;
pub mod mock;
pub mod prompts;

pub use http::HttpChatBackend;
pub use mock::{MockBackend, MockPolicy};
pub use prompts::{
    render_eval_prompt, render_rewrite_prompt, render_tracegen_prompt,
    render_translation_prompt, EvalMode, EvalShot,
};

use serde::{Deserialize, Serialize};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use crate::error::{Error, Result};
use crate::util::Semaphore;

/// Message role in a chat exchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

/// One chat message; content is never empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// Validates a request: non-empty contents, at most one system message,
/// and only at the head.
pub fn validate_messages(messages: &[ChatMessage]) -> Result<()> {
    if messages.is_empty() {
        return Err(Error::Input("chat request has no messages".into()));
    }
    for (i, m) in messages.iter().enumerate() {
        if m.content.is_empty() {
            return Err(Error::Input(format!("message #{i} has empty content")));
        }
        if m.role == Role::System && i != 0 {
            return Err(Error::Input(
                "system message allowed only at the head of the request".into(),
            ));
        }
    }
    Ok(())
}

/// Retry policy: `attempts` total tries with exponential backoff starting
/// at `backoff_ms`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryConfig {
    pub attempts: u32,
    pub backoff_ms: u64,
}

impl Default for RetryConfig {
    fn default() -> Self {
        RetryConfig {
            attempts: 3,
            backoff_ms: 250,
        }
    }
}

/// Which chat transport to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Mock,
}

/// Chat backend configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    pub model_name: String,
    /// Mock policy string (`ECHO`, `GOLD_TRACE`, `WRONG_TRACE=0.1`,
    /// `FIXED_ANSWER=2`) when `kind` is `mock`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_policy: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub retry: RetryConfig,
    #[serde(default = "default_concurrency")]
    pub concurrency_limit: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_max_tokens() -> u32 {
    4096
}
fn default_concurrency() -> usize {
    8
}
fn default_timeout_secs() -> u64 {
    300
}

impl BackendConfig {
    pub fn mock(policy: &str) -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            base_url: None,
            model_name: format!("mock:{policy}"),
            mock_policy: Some(policy.to_string()),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            retry: RetryConfig::default(),
            concurrency_limit: default_concurrency(),
            timeout_secs: default_timeout_secs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == BackendKind::Http && self.base_url.is_none() {
            return Err(Error::Config("http chat backend requires base_url".into()));
        }
        if self.temperature < 0.0 {
            return Err(Error::Config("temperature must be >= 0".into()));
        }
        Ok(())
    }
}

/// Per-call metadata threaded down to the transport: the item the call
/// belongs to and its 1-based position in the full batch. Both are used
/// for provenance; the ordinal also drives the `WRONG_TRACE` mock so that
/// resumed runs reproduce uninterrupted ones.
#[derive(Debug, Clone, Copy, Default)]
pub struct CallMeta<'a> {
    pub item_id: Option<&'a str>,
    pub ordinal: Option<u64>,
}

/// Transport-level failure, classified for the retry loop.
#[derive(Debug)]
pub enum CallError {
    /// Worth retrying: 429, 5xx, connection trouble.
    Retryable(String),
    /// Not worth retrying: auth failures, 4xx.
    Fatal(String),
    /// The response arrived but did not match the wire protocol.
    Protocol { message: String, payload: String },
}

/// A raw chat transport. Implementations perform exactly one attempt.
pub trait ChatBackend: Send + Sync {
    fn chat_once(
        &self,
        config: &BackendConfig,
        meta: CallMeta<'_>,
        messages: &[ChatMessage],
    ) -> std::result::Result<String, CallError>;
}

/// Provenance record persisted for every successful chat call.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub item_id: Option<String>,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub attempts: u32,
    pub timestamp_ms: u64,
    pub latency_ms: u64,
    pub messages: Vec<ChatMessage>,
    pub response: String,
}

enum RecordSink {
    None,
    Memory(Vec<GenerationRecord>),
    File(BufWriter<File>),
}

/// The chat gateway. Shareable across worker threads; enforces the
/// backend's concurrency limit and retry budget.
pub struct Gateway {
    config: BackendConfig,
    backend: Box<dyn ChatBackend>,
    semaphore: Semaphore,
    successes: AtomicU64,
    sink: Mutex<RecordSink>,
}

impl Gateway {
    pub fn from_config(config: BackendConfig) -> Result<Self> {
        config.validate()?;
        let backend: Box<dyn ChatBackend> = match config.kind {
            BackendKind::Mock => {
                let policy = config
                    .mock_policy
                    .as_deref()
                    .ok_or_else(|| Error::Config("mock backend requires mock_policy".into()))?;
                Box::new(MockBackend::new(MockPolicy::parse(policy)?))
            }
            BackendKind::Http => Box::new(HttpChatBackend::new(&config)?),
        };
        Ok(Self::with_backend(config, backend))
    }

    /// Wires an explicit transport; used by tests to inject faults.
    pub fn with_backend(config: BackendConfig, backend: Box<dyn ChatBackend>) -> Self {
        let limit = config.concurrency_limit.max(1);
        Gateway {
            config,
            backend,
            semaphore: Semaphore::new(limit),
            successes: AtomicU64::new(0),
            sink: Mutex::new(RecordSink::None),
        }
    }

    /// Keeps records in memory, retrievable with [`Gateway::take_records`].
    pub fn record_in_memory(mut self) -> Self {
        self.sink = Mutex::new(RecordSink::Memory(Vec::new()));
        self
    }

    /// Appends records as JSONL to `path`.
    pub fn record_to_file(self, path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        *self.sink.lock().unwrap() = RecordSink::File(BufWriter::new(file));
        Ok(self)
    }

    pub fn model_name(&self) -> &str {
        &self.config.model_name
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    /// Number of successful chat calls (== persisted records).
    pub fn records_logged(&self) -> u64 {
        self.successes.load(Ordering::SeqCst)
    }

    pub fn take_records(&self) -> Vec<GenerationRecord> {
        match &mut *self.sink.lock().unwrap() {
            RecordSink::Memory(records) => std::mem::take(records),
            _ => Vec::new(),
        }
    }

    pub fn chat(&self, messages: &[ChatMessage]) -> Result<String> {
        self.chat_with(CallMeta::default(), messages)
    }

    /// Runs one chat call under the in-flight window, retrying retryable
    /// transport failures with exponential backoff.
    pub fn chat_with(&self, meta: CallMeta<'_>, messages: &[ChatMessage]) -> Result<String> {
        validate_messages(messages)?;
        let _permit = self.semaphore.acquire();
        let attempts_allowed = self.config.retry.attempts.max(1);
        let started = Instant::now();
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.backend.chat_once(&self.config, meta, messages) {
                Ok(response) => {
                    self.persist(meta, messages, &response, attempt, started.elapsed());
                    return Ok(response);
                }
                Err(CallError::Retryable(message)) if attempt < attempts_allowed => {
                    let backoff = self.config.retry.backoff_ms << (attempt - 1);
                    log::warn!(
                        "chat attempt {attempt}/{attempts_allowed} failed ({message}); retrying in {backoff}ms"
                    );
                    std::thread::sleep(Duration::from_millis(backoff));
                }
                Err(CallError::Retryable(message)) | Err(CallError::Fatal(message)) => {
                    return Err(Error::Backend {
                        attempts: attempt,
                        message,
                    });
                }
                Err(CallError::Protocol { message, payload }) => {
                    return Err(Error::Protocol { message, payload });
                }
            }
        }
    }

    fn persist(
        &self,
        meta: CallMeta<'_>,
        messages: &[ChatMessage],
        response: &str,
        attempts: u32,
        latency: Duration,
    ) {
        self.successes.fetch_add(1, Ordering::SeqCst);
        let mut sink = self.sink.lock().unwrap();
        if matches!(*sink, RecordSink::None) {
            return;
        }
        let record = GenerationRecord {
            item_id: meta.item_id.map(str::to_string),
            model_name: self.config.model_name.clone(),
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
            attempts,
            timestamp_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
            latency_ms: latency.as_millis() as u64,
            messages: messages.to_vec(),
            response: response.to_string(),
        };
        match &mut *sink {
            RecordSink::Memory(records) => records.push(record),
            RecordSink::File(writer) => {
                if let Ok(line) = serde_json::to_string(&record) {
                    let _ = writer.write_all(line.as_bytes());
                    let _ = writer.write_all(b"\n");
                    let _ = writer.flush();
                }
            }
            RecordSink::None => {}
        }
    }
}
