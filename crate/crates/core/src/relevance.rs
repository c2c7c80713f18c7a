//! Population-specific relevance screens. Caregiver posts are checked for a
//! caregiver author; non-caregiver posts for a first-person account of
//! loneliness. Both return a verdict with verbatim evidence.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{Population, Post};
use crate::error::{Error, Result};
use crate::evidence::{self, EvidenceSpan, RawEvidence, Violation, ViolationKind};
use crate::gateway::{Annotated, Bindings, StageBinding, StageCall};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    Low,
    #[default]
    High,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceVerdict {
    pub relevant: bool,
    #[serde(default)]
    pub confidence: Confidence,
    #[serde(default)]
    pub evidence: Vec<EvidenceSpan>,
    #[serde(default)]
    pub rationale: String,
}

impl RelevanceVerdict {
    /// Screens favour recall: only a confident "not relevant" drops a post.
    pub fn keeps_post(&self) -> bool {
        self.relevant || self.confidence == Confidence::Low
    }

    /// Invariant check against the analyzed text.
    pub fn check(&self, text: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.relevant && self.evidence.is_empty() {
            out.push(Violation::new(
                ViolationKind::EmptyEvidence,
                "/evidence",
                "a relevant verdict needs at least one quote",
            ));
        }
        evidence::check_all(text, &self.evidence, "", &mut out);
        out
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVerdict {
    relevant: bool,
    #[serde(default)]
    confidence: Confidence,
    #[serde(default)]
    evidence: Vec<RawEvidence>,
    #[serde(default)]
    rationale: String,
}

/// Converts a response into a verdict, resolving every quote against `text`.
pub fn parse_verdict(text: &str, value: &Value) -> std::result::Result<RelevanceVerdict, Vec<Violation>> {
    let raw: RawVerdict = evidence::from_value(value)?;
    let mut violations = Vec::new();
    let spans = evidence::resolve_all(text, &raw.evidence, "", &mut violations);
    let verdict = RelevanceVerdict {
        relevant: raw.relevant,
        confidence: raw.confidence,
        evidence: spans,
        rationale: raw.rationale,
    };
    if verdict.relevant && raw.evidence.is_empty() {
        violations.push(Violation::new(
            ViolationKind::EmptyEvidence,
            "/evidence",
            "a relevant verdict needs at least one quote",
        ));
    }
    if violations.is_empty() {
        Ok(verdict)
    } else {
        Err(violations)
    }
}

pub fn binding_for(population: Population) -> StageBinding {
    match population {
        Population::Caregiver => StageBinding::RelevanceCaregiver,
        Population::NonCaregiver => StageBinding::RelevanceNoncaregiver,
    }
}

/// Runs the screen for the post's own population. `call` must be bound to
/// the matching template.
pub fn judge(call: &StageCall<'_>, post: &Post, include_title: bool) -> Result<Annotated<RelevanceVerdict>> {
    if post.body.trim().is_empty() {
        return Err(Error::Precondition(format!("post {} has an empty body", post.post_id)));
    }
    let text = post.analysis_text(include_title);
    let mut bindings = Bindings::new();
    bindings.insert("post_text".into(), text.clone());
    call.run(&bindings, |v| parse_verdict(&text, v))
}

pub fn judge_caregiver_author(call: &StageCall<'_>, post: &Post, include_title: bool) -> Result<Annotated<RelevanceVerdict>> {
    require(post, Population::Caregiver)?;
    judge(call, post, include_title)
}

pub fn judge_lonely_first_person(call: &StageCall<'_>, post: &Post, include_title: bool) -> Result<Annotated<RelevanceVerdict>> {
    require(post, Population::NonCaregiver)?;
    judge(call, post, include_title)
}

fn require(post: &Post, population: Population) -> Result<()> {
    if post.population != population {
        return Err(Error::Precondition(format!(
            "post {} is {}, this screen is for {}",
            post.post_id, post.population, population
        )));
    }
    Ok(())
}
