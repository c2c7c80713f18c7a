use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::http;
use super::model::ModelSpec;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    /// Template the request was rendered from. Not sent on the wire.
    pub template_id: String,
    pub messages: Vec<ChatMessage>,
}

impl ChatRequest {
    /// The first user turn, which carries the rendered post.
    pub fn prompt(&self) -> &str {
        self.messages
            .iter()
            .find(|m| m.role == "user")
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProviderError {
    #[error("rate limited by provider")]
    RateLimited { retry_after: Option<Duration> },
    #[error("provider returned server error {status}")]
    Server { status: u16, body: String },
    #[error("provider rejected request with {status}: {body}")]
    Client { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("mock script exhausted")]
    ScriptExhausted,
    #[error("provider configuration: {0}")]
    Config(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            ProviderError::RateLimited { .. }
                | ProviderError::Server { .. }
                | ProviderError::Timeout
                | ProviderError::Transport(_)
        )
    }
}

/// A chat-completion backend. Returns the assistant message content.
pub trait Provider: Send + Sync {
    fn complete(&self, model: &ModelSpec, request: &ChatRequest) -> Result<String, ProviderError>;
}

/// OpenAI-compatible `/chat/completions` over HTTP. The bearer token is read
/// from the environment variable named by the model spec.
pub struct OpenAiCompatible {
    client: reqwest::blocking::Client,
}

impl OpenAiCompatible {
    pub fn new() -> crate::Result<Self> {
        Ok(OpenAiCompatible {
            client: http::blocking_client()?,
        })
    }
}

pub fn request_body(model: &ModelSpec, request: &ChatRequest) -> Value {
    let mut body = json!({
        "model": model.model_name,
        "messages": request.messages,
        "temperature": model.temperature,
        "response_format": {"type": "json_object"},
    });
    if let Some(top_p) = model.top_p {
        body["top_p"] = json!(top_p);
    }
    if let Some(max_tokens) = model.max_tokens {
        body["max_tokens"] = json!(max_tokens);
    }
    if let Some(seed) = model.seed {
        body["seed"] = json!(seed);
    }
    body
}

/// Pulls `choices[0].message.content` out of a completion response.
pub fn response_content(body: &Value) -> Result<String, ProviderError> {
    body["choices"][0]["message"]["content"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| ProviderError::Transport("response has no choices[0].message.content".into()))
}

impl Provider for OpenAiCompatible {
    fn complete(&self, model: &ModelSpec, request: &ChatRequest) -> Result<String, ProviderError> {
        let key = std::env::var(&model.api_key_env).map_err(|_| {
            ProviderError::Config(format!("environment variable {} is not set", model.api_key_env))
        })?;
        let url = format!("{}/chat/completions", model.endpoint.trim_end_matches('/'));
        let resp = self
            .client
            .post(&url)
            .bearer_auth(key)
            .json(&request_body(model, request))
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    ProviderError::Timeout
                } else {
                    ProviderError::Transport(e.to_string())
                }
            })?;
        let status = resp.status().as_u16();
        if status == 429 {
            let retry_after = resp
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.parse::<u64>().ok())
                .map(Duration::from_secs);
            return Err(ProviderError::RateLimited { retry_after });
        }
        let text = resp.text().map_err(|e| ProviderError::Transport(e.to_string()))?;
        match status {
            200..=299 => {
                let body: Value = serde_json::from_str(&text)
                    .map_err(|e| ProviderError::Transport(format!("invalid response body: {e}")))?;
                response_content(&body)
            }
            500..=599 => Err(ProviderError::Server { status, body: text }),
            _ => Err(ProviderError::Client { status, body: text }),
        }
    }
}
