//! Client for an external neural-metric scorer (BERTScore, COMET).
//!
//! Neural metrics are not implemented natively; when a scorer endpoint is
//! configured its scores fill the corresponding report slots, otherwise the
//! slots are reported as absent.

use serde::{Deserialize, Serialize};
use std::time::Duration;

use crate::error::{Error, Result};

/// Endpoint configuration for the external scorer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScorerConfig {
    pub base_url: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    120
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    metric: &'a str,
    pairs: &'a [(String, String)],
}

#[derive(Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
}

/// Blocking client around `POST {base_url}/score`.
pub struct ExternalScorer {
    config: ScorerConfig,
    client: reqwest::blocking::Client,
}

impl ExternalScorer {
    pub fn new(config: ScorerConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Config(format!("scorer client: {e}")))?;
        Ok(ExternalScorer { config, client })
    }

    /// Scores `(hypothesis, reference)` pairs with the named metric and
    /// returns the per-pair values.
    pub fn score(&self, metric: &str, pairs: &[(String, String)]) -> Result<Vec<f64>> {
        let url = format!("{}/score", self.config.base_url.trim_end_matches('/'));
        let response = self
            .client
            .post(&url)
            .json(&ScoreRequest { metric, pairs })
            .send()
            .map_err(|e| Error::Backend {
                attempts: 1,
                message: format!("scorer request failed: {e}"),
            })?;
        let status = response.status();
        let body = response.text().map_err(|e| Error::Backend {
            attempts: 1,
            message: format!("scorer body read failed: {e}"),
        })?;
        if !status.is_success() {
            return Err(Error::Backend {
                attempts: 1,
                message: format!("scorer returned {status}: {body}"),
            });
        }
        let parsed: ScoreResponse = serde_json::from_str(&body).map_err(|e| Error::Protocol {
            message: format!("scorer response did not parse: {e}"),
            payload: body,
        })?;
        if parsed.scores.len() != pairs.len() {
            return Err(Error::Protocol {
                message: format!(
                    "scorer returned {} scores for {} pairs",
                    parsed.scores.len(),
                    pairs.len()
                ),
                payload: String::new(),
            });
        }
        Ok(parsed.scores)
    }

    /// Mean score over pairs.
    pub fn score_mean(&self, metric: &str, pairs: &[(String, String)]) -> Result<f64> {
        let scores = self.score(metric, pairs)?;
        if scores.is_empty() {
            return Err(Error::Input("scorer called with no pairs".into()));
        }
        Ok(scores.iter().sum::<f64>() / scores.len() as f64)
    }
}
