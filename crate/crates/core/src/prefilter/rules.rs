//! Per-community regex screens evaluated in authoring order, first match wins.

use std::collections::BTreeMap;
use std::path::Path;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::corpus::normalize_community;
use crate::error::{Error, Result};

const DEFAULT_RULES: &str = include_str!("../../assets/rules.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    MarksIrrelevant,
    MarksRelevant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScreenDecision {
    Irrelevant,
    Relevant,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSpec {
    pub pattern: String,
    pub polarity: Polarity,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSetSpec {
    pub community: String,
    #[serde(default = "default_true")]
    pub case_insensitive: bool,
    /// When set, a post that matches no rule is dropped instead of passed on.
    #[serde(default)]
    pub require_relevant_match: bool,
    #[serde(default, rename = "rule")]
    pub rules: Vec<RuleSpec>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone)]
struct CompiledRule {
    spec: RuleSpec,
    regex: Regex,
}

#[derive(Debug, Clone)]
pub struct RegexRuleSet {
    community: String,
    require_relevant_match: bool,
    rules: Vec<CompiledRule>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenResult {
    pub decision: ScreenDecision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_pattern: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_note: Option<String>,
}

impl ScreenResult {
    pub fn undetermined() -> Self {
        ScreenResult {
            decision: ScreenDecision::Undetermined,
            matched_pattern: None,
            matched_note: None,
        }
    }
}

impl RegexRuleSet {
    pub fn compile(spec: RuleSetSpec) -> Result<Self> {
        let rules = spec
            .rules
            .into_iter()
            .map(|rule| {
                let regex = RegexBuilder::new(&rule.pattern)
                    .case_insensitive(spec.case_insensitive)
                    .build()
                    .map_err(|e| Error::Regex {
                        pattern: rule.pattern.clone(),
                        message: e.to_string(),
                    })?;
                Ok(CompiledRule { spec: rule, regex })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RegexRuleSet {
            community: spec.community,
            require_relevant_match: spec.require_relevant_match,
            rules,
        })
    }

    pub fn community(&self) -> &str {
        &self.community
    }

    pub fn require_relevant_match(&self) -> bool {
        self.require_relevant_match
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn screen(&self, text: &str) -> ScreenResult {
        for rule in &self.rules {
            if rule.regex.is_match(text) {
                return ScreenResult {
                    decision: match rule.spec.polarity {
                        Polarity::MarksIrrelevant => ScreenDecision::Irrelevant,
                        Polarity::MarksRelevant => ScreenDecision::Relevant,
                    },
                    matched_pattern: Some(rule.spec.pattern.clone()),
                    matched_note: Some(rule.spec.note.clone()),
                };
            }
        }
        ScreenResult::undetermined()
    }
}

#[derive(Debug, Deserialize)]
struct RuleFile {
    #[serde(default, rename = "ruleset")]
    rulesets: Vec<RuleSetSpec>,
}

/// All rule sets of a run, at most one per community.
#[derive(Debug, Clone, Default)]
pub struct RuleBook {
    sets: BTreeMap<String, RegexRuleSet>,
}

impl RuleBook {
    pub fn from_specs(specs: Vec<RuleSetSpec>) -> Result<Self> {
        let mut sets = BTreeMap::new();
        for spec in specs {
            let key = normalize_community(&spec.community);
            if sets.contains_key(&key) {
                return Err(Error::Config(format!(
                    "more than one rule set for community `{}`",
                    spec.community
                )));
            }
            sets.insert(key, RegexRuleSet::compile(spec)?);
        }
        Ok(RuleBook { sets })
    }

    pub fn from_toml(src: &str) -> Result<Self> {
        let file: RuleFile = toml::from_str(src).map_err(|e| Error::parse("rule sets", e))?;
        Self::from_specs(file.rulesets)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&src)
    }

    /// Rule sets built from the publicly described exemplar phrases.
    pub fn shipped() -> Self {
        Self::from_toml(DEFAULT_RULES).expect("shipped rule sets compile")
    }

    pub fn get(&self, community: &str) -> Option<&RegexRuleSet> {
        self.sets.get(&normalize_community(community))
    }

    pub fn screen(&self, community: &str, text: &str) -> ScreenResult {
        self.get(community)
            .map(|set| set.screen(text))
            .unwrap_or_else(ScreenResult::undetermined)
    }
}
