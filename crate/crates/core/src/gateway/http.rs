//! OpenAI-compatible chat-completions transport.
//!
//! `POST {base_url}/v1/chat/completions` with
//! `{"model","messages":[{"role","content"}],"temperature","max_tokens"}`,
//! reading `choices[0].message.content`. The API key comes from the
//! `MEDTRACE_API_KEY` environment variable when set.

use serde::{Deserialize, Serialize};
use std::time::Duration;

use crate::error::{Error, Result};
use crate::gateway::{BackendConfig, CallError, CallMeta, ChatBackend, ChatMessage};

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: AssistantMessage,
}

#[derive(Deserialize)]
struct AssistantMessage {
    content: Option<String>,
}

pub struct HttpChatBackend {
    base_url: String,
    client: reqwest::blocking::Client,
}

impl HttpChatBackend {
    pub fn new(config: &BackendConfig) -> Result<Self> {
        let base_url = config
            .base_url
            .clone()
            .ok_or_else(|| Error::Config("http chat backend requires base_url".into()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Config(format!("chat client: {e}")))?;
        Ok(HttpChatBackend {
            base_url: base_url.trim_end_matches('/').to_string(),
            client,
        })
    }
}

impl ChatBackend for HttpChatBackend {
    fn chat_once(
        &self,
        config: &BackendConfig,
        _meta: CallMeta<'_>,
        messages: &[ChatMessage],
    ) -> std::result::Result<String, CallError> {
        let url = format!("{}/v1/chat/completions", self.base_url);
        let mut request = self.client.post(&url).json(&ChatRequest {
            model: &config.model_name,
            messages,
            temperature: config.temperature,
            max_tokens: config.max_tokens,
        });
        if let Ok(key) = std::env::var("MEDTRACE_API_KEY") {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| CallError::Retryable(format!("chat request failed: {e}")))?;
        let status = response.status();
        let body = response
            .text()
            .map_err(|e| CallError::Retryable(format!("chat body read failed: {e}")))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(CallError::Retryable(format!(
                "chat endpoint returned {status}: {body}"
            )));
        }
        if !status.is_success() {
            return Err(CallError::Fatal(format!(
                "chat endpoint returned {status}: {body}"
            )));
        }
        let parsed: ChatResponse = serde_json::from_str(&body).map_err(|e| CallError::Protocol {
            message: format!("chat response did not parse: {e}"),
            payload: body.clone(),
        })?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or(CallError::Protocol {
                message: "chat response has no choices[0].message.content".into(),
                payload: body,
            })
    }
}
