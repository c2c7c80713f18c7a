//! Scripted provider for offline runs and fault-injection tests.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::model::ModelSpec;
use super::provider::{ChatRequest, Provider, ProviderError};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    Timeout,
    RateLimited,
    ServerError,
    /// A 200 response whose content is not valid JSON.
    MalformedJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MockReply {
    Json { value: Value },
    Text { text: String },
    Fault { fault: Fault },
}

impl MockReply {
    pub fn json(value: Value) -> Self {
        MockReply::Json { value }
    }

    pub fn fault(fault: Fault) -> Self {
        MockReply::Fault { fault }
    }
}

/// Replies to requests whose template and first user turn match. Replies are
/// consumed in order; the last one repeats unless `repeat_last` is false.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
    #[serde(default)]
    pub contains: Vec<String>,
    #[serde(default)]
    pub not_contains: Vec<String>,
    pub replies: Vec<MockReply>,
    #[serde(default = "default_true")]
    pub repeat_last: bool,
}

fn default_true() -> bool {
    true
}

impl MockRule {
    fn matches(&self, request: &ChatRequest) -> bool {
        if let Some(t) = &self.template_id {
            if *t != request.template_id {
                return false;
            }
        }
        let prompt = request.prompt();
        self.contains.iter().all(|c| prompt.contains(c.as_str()))
            && !self.not_contains.iter().any(|c| prompt.contains(c.as_str()))
    }
}

/// A sequence consumed first, then a rule table (first matching rule wins).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub sequence: Vec<MockReply>,
    #[serde(default)]
    pub rules: Vec<MockRule>,
}

impl MockScript {
    pub fn from_json(src: &str) -> Result<Self> {
        serde_json::from_str(src).map_err(|e| Error::parse("mock script", e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&src)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, rule) in self.rules.iter().enumerate() {
            if rule.replies.is_empty() {
                return Err(Error::Config(format!("mock rule {i} has no replies")));
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
struct State {
    sequence_pos: usize,
    rule_pos: Vec<usize>,
}

#[derive(Debug)]
pub struct MockProvider {
    script: MockScript,
    state: Mutex<State>,
    calls: AtomicUsize,
}

impl MockProvider {
    pub fn new(script: MockScript) -> Result<Self> {
        script.validate()?;
        let rules = script.rules.len();
        Ok(MockProvider {
            script,
            state: Mutex::new(State {
                sequence_pos: 0,
                rule_pos: vec![0; rules],
            }),
            calls: AtomicUsize::new(0),
        })
    }

    pub fn sequence(replies: Vec<MockReply>) -> Self {
        Self::new(MockScript {
            sequence: replies,
            rules: Vec::new(),
        })
        .expect("sequence scripts are always valid")
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn next_reply(&self, request: &ChatRequest) -> Option<MockReply> {
        let mut state = self.state.lock().unwrap();
        if state.sequence_pos < self.script.sequence.len() {
            state.sequence_pos += 1;
            return Some(self.script.sequence[state.sequence_pos - 1].clone());
        }
        for (i, rule) in self.script.rules.iter().enumerate() {
            if !rule.matches(request) {
                continue;
            }
            let pos = state.rule_pos[i];
            if pos < rule.replies.len() {
                state.rule_pos[i] += 1;
                return Some(rule.replies[pos].clone());
            }
            if rule.repeat_last {
                return rule.replies.last().cloned();
            }
        }
        None
    }
}

impl Provider for MockProvider {
    fn complete(&self, _model: &ModelSpec, request: &ChatRequest) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        match self.next_reply(request).ok_or(ProviderError::ScriptExhausted)? {
            MockReply::Json { value } => Ok(value.to_string()),
            MockReply::Text { text } => Ok(text),
            MockReply::Fault { fault } => match fault {
                Fault::Timeout => Err(ProviderError::Timeout),
                Fault::RateLimited => Err(ProviderError::RateLimited { retry_after: None }),
                Fault::ServerError => Err(ProviderError::Server {
                    status: 503,
                    body: "scripted outage".into(),
                }),
                Fault::MalformedJson => Ok("{\"truncated\": ".into()),
            },
        }
    }
}
