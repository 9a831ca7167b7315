//! Embedding backends: an OpenAI-compatible wire client and a
//! deterministic hash-based mock for offline runs.
//!
//! Both produce L2-normalized vectors, batched, input order preserved.

use serde::{Deserialize, Serialize};
use std::time::Duration;

use crate::error::{Error, Result};
use crate::retrieval::EmbeddingVector;
use crate::util::parallel_map_ordered;

/// Which embedding transport to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedKind {
    Http,
    Mock,
}

/// Embedding backend configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedConfig {
    pub kind: EmbedKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    pub model_name: String,
    /// Mock dimension; the HTTP backend takes whatever the model returns.
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Bounded in-flight window for batch requests.
    #[serde(default = "default_concurrency")]
    pub concurrency_limit: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub retry: crate::gateway::RetryConfig,
}

fn default_dim() -> usize {
    32
}
fn default_batch_size() -> usize {
    16
}
fn default_concurrency() -> usize {
    8
}
fn default_timeout_secs() -> u64 {
    120
}

impl EmbedConfig {
    pub fn mock(model_name: &str, dim: usize) -> Self {
        EmbedConfig {
            kind: EmbedKind::Mock,
            base_url: None,
            model_name: model_name.to_string(),
            dim,
            batch_size: default_batch_size(),
            concurrency_limit: default_concurrency(),
            timeout_secs: default_timeout_secs(),
            retry: crate::gateway::RetryConfig::default(),
        }
    }
}

/// A batch embedder; one vector per input text, order preserved.
pub trait EmbedBackend: Send + Sync {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;
    fn id(&self) -> &str;
}

/// Front door: splits inputs into batches, runs them through a bounded
/// in-flight window, and reassembles results in input order.
pub struct Embedder {
    backend: Box<dyn EmbedBackend>,
    batch_size: usize,
    concurrency: usize,
}

impl Embedder {
    pub fn from_config(config: &EmbedConfig) -> Result<Self> {
        let backend: Box<dyn EmbedBackend> = match config.kind {
            EmbedKind::Mock => Box::new(HashEmbedder::new(&config.model_name, config.dim)),
            EmbedKind::Http => Box::new(HttpEmbedder::new(config)?),
        };
        Ok(Embedder {
            backend,
            batch_size: config.batch_size.max(1),
            concurrency: config.concurrency_limit.max(1),
        })
    }

    pub fn id(&self) -> &str {
        self.backend.id()
    }

    /// Embeds every text; failures carry the indices of the failed batch.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let batches: Vec<&[String]> = texts.chunks(self.batch_size).collect();
        let results = parallel_map_ordered(&batches, self.concurrency, |_, batch| {
            self.backend.embed_batch(batch)
        });
        let mut out = Vec::with_capacity(texts.len());
        for (batch_idx, result) in results.into_iter().enumerate() {
            let vectors = result.map_err(|e| {
                let start = batch_idx * self.batch_size;
                let end = (start + self.batch_size).min(texts.len());
                Error::Backend {
                    attempts: 1,
                    message: format!("embedding batch for items {start}..{end} failed: {e}"),
                }
            })?;
            out.extend(vectors);
        }
        if out.len() != texts.len() {
            return Err(Error::Protocol {
                message: format!("embedded {} texts, got {} vectors", texts.len(), out.len()),
                payload: String::new(),
            });
        }
        Ok(out)
    }
}

/// Deterministic mock: vectors are a pure function of (model id, text).
pub struct HashEmbedder {
    id: String,
    dim: usize,
}

impl HashEmbedder {
    pub fn new(model_name: &str, dim: usize) -> Self {
        HashEmbedder {
            id: model_name.to_string(),
            dim: dim.max(1),
        }
    }

    fn embed_one(&self, text: &str) -> EmbeddingVector {
        let mut state = fnv1a(self.id.as_bytes()) ^ fnv1a(text.as_bytes());
        let mut values = Vec::with_capacity(self.dim);
        for _ in 0..self.dim {
            state = splitmix64(state);
            // Map the top 53 bits onto [-1, 1).
            let unit = (state >> 11) as f64 / (1u64 << 53) as f64;
            values.push((unit * 2.0 - 1.0) as f32);
        }
        let mut vector = EmbeddingVector {
            values,
            normalized: false,
        };
        if vector.normalize().is_err() {
            vector.values[0] = 1.0;
            vector.normalized = true;
        }
        vector
    }
}

impl EmbedBackend for HashEmbedder {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }

    fn id(&self) -> &str {
        &self.id
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x1000_0000_01b3);
    }
    hash
}

fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Serialize)]
struct EmbeddingsRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingRow>,
}

#[derive(Deserialize)]
struct EmbeddingRow {
    index: usize,
    embedding: Vec<f32>,
}

/// OpenAI-compatible `/v1/embeddings` client. Transport faults and
/// 429/5xx answers retry with exponential backoff before surfacing as a
/// stage error.
pub struct HttpEmbedder {
    id: String,
    base_url: String,
    retry: crate::gateway::RetryConfig,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(config: &EmbedConfig) -> Result<Self> {
        let base_url = config
            .base_url
            .clone()
            .ok_or_else(|| Error::Config("http embedding backend requires base_url".into()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Config(format!("embedding client: {e}")))?;
        Ok(HttpEmbedder {
            id: config.model_name.clone(),
            base_url: base_url.trim_end_matches('/').to_string(),
            retry: config.retry,
            client,
        })
    }

    /// One transport attempt; `Ok(Err(status_body))` marks a retryable
    /// HTTP answer.
    fn request_once(
        &self,
        texts: &[String],
    ) -> Result<std::result::Result<String, String>> {
        let url = format!("{}/v1/embeddings", self.base_url);
        let mut request = self.client.post(&url).json(&EmbeddingsRequest {
            model: &self.id,
            input: texts,
        });
        if let Ok(key) = std::env::var("MEDTRACE_API_KEY") {
            request = request.bearer_auth(key);
        }
        let response = match request.send() {
            Ok(response) => response,
            Err(e) => return Ok(Err(format!("embedding request failed: {e}"))),
        };
        let status = response.status();
        let body = match response.text() {
            Ok(body) => body,
            Err(e) => return Ok(Err(format!("embedding body read failed: {e}"))),
        };
        if status.as_u16() == 429 || status.is_server_error() {
            return Ok(Err(format!("embedding endpoint returned {status}: {body}")));
        }
        if !status.is_success() {
            return Err(Error::Backend {
                attempts: 1,
                message: format!("embedding endpoint returned {status}: {body}"),
            });
        }
        Ok(Ok(body))
    }
}

impl EmbedBackend for HttpEmbedder {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let attempts_allowed = self.retry.attempts.max(1);
        let mut attempt = 0;
        let body = loop {
            attempt += 1;
            match self.request_once(texts)? {
                Ok(body) => break body,
                Err(message) if attempt < attempts_allowed => {
                    let backoff = self.retry.backoff_ms << (attempt - 1);
                    log::warn!(
                        "embedding attempt {attempt}/{attempts_allowed} failed ({message}); retrying in {backoff}ms"
                    );
                    std::thread::sleep(Duration::from_millis(backoff));
                }
                Err(message) => {
                    return Err(Error::Backend {
                        attempts: attempt,
                        message,
                    })
                }
            }
        };
        let parsed: EmbeddingsResponse =
            serde_json::from_str(&body).map_err(|e| Error::Protocol {
                message: format!("embedding response did not parse: {e}"),
                payload: body,
            })?;
        if parsed.data.len() != texts.len() {
            return Err(Error::Protocol {
                message: format!(
                    "embedding endpoint returned {} rows for {} inputs",
                    parsed.data.len(),
                    texts.len()
                ),
                payload: String::new(),
            });
        }
        let mut rows = parsed.data;
        rows.sort_by_key(|r| r.index);
        rows.into_iter()
            .map(|r| {
                let mut v = EmbeddingVector {
                    values: r.embedding,
                    normalized: false,
                };
                v.normalize()?;
                Ok(v)
            })
            .collect()
    }

    fn id(&self) -> &str {
        &self.id
    }
}
