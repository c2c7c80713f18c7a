//! Provider-agnostic completion client.
//!
//! [`Gateway::complete`] renders a template, checks the transcript cache,
//! calls the provider under the rate limiter and the in-flight bound, and
//! validates the reply against the template's closed schema plus a
//! stage-specific validator. A reply that fails validation gets exactly one
//! repair round-trip (the violations are sent back to the model) before the
//! call fails.

mod cache;
mod clock;
pub mod http;
mod mock;
mod model;
mod provider;
mod schema;
mod template;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use cache::{transcript_key, Transcript, TranscriptCache};
pub use clock::{Clock, MockClock, RateLimiter, RetryPolicy, Semaphore, SystemClock};
pub use mock::{Fault, MockProvider, MockReply, MockRule, MockScript};
pub use model::{ModelSpec, ProviderKind, StageBinding};
pub use provider::{
    request_body, response_content, ChatMessage, ChatRequest, OpenAiCompatible, Provider,
    ProviderError,
};
pub use schema::validate as validate_schema;
pub use template::{Bindings, PromptTemplate, RenderedPrompt};

use crate::error::{Error, Result};
use crate::evidence::{Violation, ViolationKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CacheMode {
    /// Always call the provider; nothing is read from or written to the cache.
    Live,
    /// Serve only from the cache; a miss is an error.
    Replay,
    /// Serve from the cache when possible, otherwise call and persist.
    #[default]
    Record,
}

/// Where a stored model output came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub template_id: String,
    pub version: String,
    pub model_name: String,
}

/// A validated model output as stored on a post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotated<T> {
    pub provenance: Provenance,
    pub value: T,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub key: String,
    pub value: Value,
    pub provenance: Provenance,
    /// Provider calls beyond the first (transport retries plus repairs).
    pub retry_count: u32,
    pub cache_hit: bool,
}

pub struct Gateway {
    provider: Arc<dyn Provider>,
    cache: Option<TranscriptCache>,
    clock: Arc<dyn Clock>,
    limiter: RateLimiter,
    retry: RetryPolicy,
    in_flight: Semaphore,
    key_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl Gateway {
    pub fn new(provider: Arc<dyn Provider>) -> Self {
        Gateway {
            provider,
            cache: None,
            clock: Arc::new(SystemClock::default()),
            limiter: RateLimiter::per_second(10),
            retry: RetryPolicy::default(),
            in_flight: Semaphore::new(8),
            key_locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_cache(mut self, cache: TranscriptCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_rate_limit(mut self, requests_per_second: usize) -> Self {
        self.limiter = RateLimiter::per_second(requests_per_second);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.in_flight = Semaphore::new(n);
        self
    }

    pub fn cache(&self) -> Option<&TranscriptCache> {
        self.cache.as_ref()
    }

    pub fn complete(
        &self,
        template: &PromptTemplate,
        bindings: &Bindings,
        model: &ModelSpec,
        mode: CacheMode,
        validator: &dyn Fn(&Value) -> Vec<Violation>,
    ) -> Result<Completion> {
        let rendered = template.render(bindings)?;
        let key = transcript_key(
            &template.template_id,
            &template.version,
            &model.model_name,
            &rendered.system,
            &rendered.user,
        );
        let provenance = Provenance {
            template_id: template.template_id.clone(),
            version: template.version.clone(),
            model_name: model.model_name.clone(),
        };

        if mode == CacheMode::Replay {
            let cache = self.require_cache()?;
            let transcript = cache.load(&key)?.ok_or_else(|| Error::CacheMiss { key: key.clone() })?;
            return Ok(Completion {
                key,
                value: transcript.parsed,
                provenance,
                retry_count: transcript.retry_count,
                cache_hit: true,
            });
        }

        // Serialize identical prompts so a duplicate waits for the first
        // call's transcript instead of calling the provider again.
        let lock = (mode == CacheMode::Record).then(|| self.key_lock(&key));
        let _guard = lock.as_ref().map(|l| l.lock().unwrap());

        if mode == CacheMode::Record {
            if let Some(t) = self.require_cache()?.load(&key)? {
                return Ok(Completion {
                    key,
                    value: t.parsed,
                    provenance,
                    retry_count: t.retry_count,
                    cache_hit: true,
                });
            }
        }

        let started = now_ms();
        let mut messages = vec![
            ChatMessage::system(rendered.system),
            ChatMessage::user(rendered.user),
        ];
        let mut retry_count = 0u32;
        let mut repairs_left = 1u32;
        let (raw, parsed) = loop {
            let request = ChatRequest {
                template_id: template.template_id.clone(),
                messages: messages.clone(),
            };
            let raw = self.send(model, &request, &mut retry_count)?;
            let violations = match parse_json_content(&raw) {
                Ok(value) => {
                    let mut v = schema::validate(&template.response_schema, &value);
                    if v.is_empty() {
                        v = validator(&value);
                    }
                    if v.is_empty() {
                        break (raw, value);
                    }
                    v
                }
                Err(e) => vec![Violation::new(ViolationKind::Malformed, "/", e)],
            };
            if repairs_left == 0 {
                return Err(Error::InvalidResponse { violations });
            }
            repairs_left -= 1;
            retry_count += 1;
            tracing::debug!(template = %template.template_id, ?violations, "repairing response");
            messages.push(ChatMessage::assistant(raw));
            messages.push(ChatMessage::user(repair_message(&violations)));
        };

        if mode == CacheMode::Record {
            let transcript = Transcript {
                key: key.clone(),
                template_id: template.template_id.clone(),
                version: template.version.clone(),
                model_name: model.model_name.clone(),
                request: messages,
                raw_response: raw,
                parsed: parsed.clone(),
                retry_count,
                started_at_ms: started,
                finished_at_ms: now_ms(),
            };
            self.require_cache()?.store(&transcript)?;
        }

        Ok(Completion {
            key,
            value: parsed,
            provenance,
            retry_count,
            cache_hit: false,
        })
    }

    fn send(&self, model: &ModelSpec, request: &ChatRequest, retry_count: &mut u32) -> Result<String> {
        let mut attempt = 0u32;
        loop {
            let result = {
                let _permit = self.in_flight.acquire();
                self.limiter.acquire(self.clock.as_ref());
                self.provider.complete(model, request)
            };
            match result {
                Ok(content) => return Ok(content),
                Err(err) if err.is_retryable() && attempt < self.retry.max_retries => {
                    let delay = match &err {
                        ProviderError::RateLimited { retry_after: Some(d) } => *d,
                        _ => self.retry.delay(attempt),
                    };
                    tracing::warn!(error = %err, ?delay, attempt, "provider call failed, backing off");
                    self.clock.sleep(delay);
                    attempt += 1;
                    *retry_count += 1;
                }
                Err(err) => return Err(Error::Provider(err)),
            }
        }
    }

    fn require_cache(&self) -> Result<&TranscriptCache> {
        self.cache
            .as_ref()
            .ok_or_else(|| Error::Config("cache mode requires a cache directory".into()))
    }

    fn key_lock(&self, key: &str) -> Arc<Mutex<()>> {
        self.key_locks
            .lock()
            .unwrap()
            .entry(key.to_string())
            .or_default()
            .clone()
    }
}

/// One LLM-backed stage invocation: the template, model and cache mode a
/// stage uses for every post.
#[derive(Clone, Copy)]
pub struct StageCall<'a> {
    pub gateway: &'a Gateway,
    pub template: &'a PromptTemplate,
    pub model: &'a ModelSpec,
    pub mode: CacheMode,
}

impl StageCall<'_> {
    /// Completes and converts the reply with `parse`, which doubles as the
    /// domain validator (its violations drive the repair round).
    pub fn run<T>(
        &self,
        bindings: &Bindings,
        parse: impl Fn(&Value) -> std::result::Result<T, Vec<Violation>>,
    ) -> Result<Annotated<T>> {
        let validator = |v: &Value| parse(v).err().unwrap_or_default();
        let completion = self
            .gateway
            .complete(self.template, bindings, self.model, self.mode, &validator)?;
        let value = parse(&completion.value).map_err(|violations| Error::InvalidResponse { violations })?;
        Ok(Annotated {
            provenance: completion.provenance,
            value,
            warnings: Vec::new(),
        })
    }
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

/// Parses a reply as a single JSON object, tolerating a surrounding
/// markdown code fence.
pub fn parse_json_content(raw: &str) -> std::result::Result<Value, String> {
    let trimmed = raw.trim();
    let inner = trimmed
        .strip_prefix("```json")
        .or_else(|| trimmed.strip_prefix("```"))
        .and_then(|s| s.strip_suffix("```"))
        .unwrap_or(trimmed);
    let value: Value = serde_json::from_str(inner.trim()).map_err(|e| e.to_string())?;
    if value.is_object() {
        Ok(value)
    } else {
        Err("response must be a single JSON object".into())
    }
}

fn repair_message(violations: &[Violation]) -> String {
    let mut msg = String::from(
        "Your previous reply was rejected by the validator. Fix every problem below and reply with the corrected JSON object only.\n",
    );
    for v in violations {
        msg.push_str("- ");
        msg.push_str(&v.to_string());
        msg.push('\n');
    }
    msg
}
