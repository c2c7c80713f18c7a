//! Cheap deterministic screens run before any LLM call: token-count bounds
//! and per-community regex rules.

mod rules;
mod tokens;

use serde::{Deserialize, Serialize};

pub use rules::{
    Polarity, RegexRuleSet, RuleBook, RuleSetSpec, RuleSpec, ScreenDecision, ScreenResult,
};
pub use tokens::TokenCounter;

use crate::corpus::{Post, StageStatus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenFilterSpec {
    #[serde(default = "default_min")]
    pub min_tokens: usize,
    #[serde(default = "default_max")]
    pub max_tokens: usize,
    #[serde(default = "default_vocabulary")]
    pub vocabulary_id: String,
}

fn default_min() -> usize {
    150
}

fn default_max() -> usize {
    1000
}

fn default_vocabulary() -> String {
    "cl100k_base".into()
}

impl Default for TokenFilterSpec {
    fn default() -> Self {
        TokenFilterSpec {
            min_tokens: default_min(),
            max_tokens: default_max(),
            vocabulary_id: default_vocabulary(),
        }
    }
}

impl TokenFilterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            return Err(Error::Config(format!(
                "token bounds must satisfy 0 < min ({}) <= max ({})",
                self.min_tokens, self.max_tokens
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthDecision {
    Keep,
    DropShort,
    DropLong,
}

/// Both bounds are inclusive: `[min_tokens, max_tokens]` is kept.
pub fn classify_length(count: usize, spec: &TokenFilterSpec) -> LengthDecision {
    if count < spec.min_tokens {
        LengthDecision::DropShort
    } else if count > spec.max_tokens {
        LengthDecision::DropLong
    } else {
        LengthDecision::Keep
    }
}

pub fn length_filter(post: &Post, spec: &TokenFilterSpec) -> Result<LengthDecision> {
    let count = post.token_count.ok_or_else(|| {
        Error::Precondition(format!("post {} has no token count", post.post_id))
    })?;
    Ok(classify_length(count, spec))
}

/// What the prefilter stage stores on a post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefilterRecord {
    pub token_count: usize,
    pub length: LengthDecision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screen: Option<ScreenResult>,
}

#[derive(Debug, Clone)]
pub struct Prefilter {
    spec: TokenFilterSpec,
    counter: TokenCounter,
    rules: RuleBook,
}

impl Prefilter {
    pub fn new(spec: TokenFilterSpec, rules: RuleBook) -> Result<Self> {
        spec.validate()?;
        let counter = TokenCounter::new(&spec.vocabulary_id)?;
        Ok(Prefilter {
            spec,
            counter,
            rules,
        })
    }

    pub fn counter(&self) -> &TokenCounter {
        &self.counter
    }

    /// Length first, then the community's rule set. A rule set that requires
    /// a relevant match drops undetermined posts.
    pub fn apply(&self, post: &Post, include_title: bool) -> (PrefilterRecord, StageStatus) {
        let text = post.analysis_text(include_title);
        let token_count = self.counter.count(&text);
        let length = classify_length(token_count, &self.spec);
        if length != LengthDecision::Keep {
            let record = PrefilterRecord {
                token_count,
                length,
                screen: None,
            };
            return (record, StageStatus::Rejected);
        }
        let (screen, status) = match self.rules.get(&post.community) {
            None => (None, StageStatus::Passed),
            Some(set) => {
                let result = set.screen(&text);
                let status = match result.decision {
                    ScreenDecision::Irrelevant => StageStatus::Rejected,
                    ScreenDecision::Relevant => StageStatus::Passed,
                    ScreenDecision::Undetermined if set.require_relevant_match() => {
                        StageStatus::Rejected
                    }
                    ScreenDecision::Undetermined => StageStatus::Passed,
                };
                (Some(result), status)
            }
        };
        (
            PrefilterRecord {
                token_count,
                length,
                screen,
            },
            status,
        )
    }
}
