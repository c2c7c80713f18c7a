//! Multi-label cause categorization: seven cause types, each optionally tied
//! to caregiving, every cause backed by evidence no other cause reuses.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{Population, Post, PostId};
use crate::error::{Error, Result};
use crate::evidence::{self, EvidenceSpan, RawEvidence, Violation, ViolationKind};
use crate::gateway::{Annotated, Bindings, StageCall};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CauseType {
    Social,
    Emotional,
    Physical,
    MentalHealth,
    Relational,
    Network,
    Other,
}

impl CauseType {
    pub const ALL: [CauseType; 7] = [
        CauseType::Social,
        CauseType::Emotional,
        CauseType::Physical,
        CauseType::MentalHealth,
        CauseType::Relational,
        CauseType::Network,
        CauseType::Other,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CauseType::Social => "social",
            CauseType::Emotional => "emotional",
            CauseType::Physical => "physical",
            CauseType::MentalHealth => "mental_health",
            CauseType::Relational => "relational",
            CauseType::Network => "network",
            CauseType::Other => "other",
        }
    }
}

impl fmt::Display for CauseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cause {
    pub cause_type: CauseType,
    pub caregiving_related: bool,
    pub evidence: Vec<EvidenceSpan>,
    #[serde(default)]
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CauseSet {
    pub post_id: PostId,
    pub causes: Vec<Cause>,
}

impl CauseSet {
    /// Distinct (type, caregiving_related) pairs present in the set.
    pub fn presence(&self) -> BTreeSet<(CauseType, bool)> {
        presence(&self.causes)
    }
}

pub fn presence(causes: &[Cause]) -> BTreeSet<(CauseType, bool)> {
    causes.iter().map(|c| (c.cause_type, c.caregiving_related)).collect()
}

/// Every machine-checkable invariant of a cause list. Empty on success.
pub fn validate_cause_set(text: &str, cause_set: &CauseSet) -> Vec<Violation> {
    validate_causes(text, &cause_set.causes)
}

pub fn validate_causes(text: &str, causes: &[Cause]) -> Vec<Violation> {
    let mut out = Vec::new();
    for (i, cause) in causes.iter().enumerate() {
        evidence::check_all(text, &cause.evidence, &format!("/causes/{i}"), &mut out);
    }
    out.extend(check_structure(causes));
    out
}

/// The checks that do not need the post text: empty evidence, duplicate
/// pairs and evidence reuse.
pub fn check_structure(causes: &[Cause]) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut pairs = BTreeMap::new();
    for (i, cause) in causes.iter().enumerate() {
        let path = format!("/causes/{i}");
        if cause.evidence.is_empty() {
            out.push(Violation::new(ViolationKind::EmptyEvidence, format!("{path}/evidence"), "a cause needs a quote"));
        }
        if let Some(first) = pairs.insert((cause.cause_type, cause.caregiving_related), i) {
            out.push(Violation::new(
                ViolationKind::DuplicateCause,
                path.clone(),
                format!(
                    "{} (caregiving_related={}) already given by cause {first}",
                    cause.cause_type, cause.caregiving_related
                ),
            ));
        }
    }
    // Evidence may not be shared between causes at any character position.
    for (i, a) in causes.iter().enumerate() {
        for (j, b) in causes.iter().enumerate().skip(i + 1) {
            for (ai, sa) in a.evidence.iter().enumerate() {
                for sb in &b.evidence {
                    if sa.overlaps(sb) {
                        out.push(Violation::new(
                            ViolationKind::EvidenceReuse,
                            format!("/causes/{j}/evidence"),
                            format!(
                                "overlaps /causes/{i}/evidence/{ai} \"{}\"",
                                evidence::truncate(&sa.quote, 40)
                            ),
                        ));
                    }
                }
            }
        }
    }
    out
}

static TIME_OR_ENERGY: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(no time|don'?t have (?:the )?time|time for (?:myself|friends|anyone)|exhausted|too tired|no energy|worn out|drained|24/7|around the clock)\b").unwrap()
});

/// Soft checks. These never reject a cause set.
pub fn warnings(cause_set: &CauseSet) -> Vec<String> {
    let mut out = Vec::new();
    for (i, cause) in cause_set.causes.iter().enumerate() {
        if cause.cause_type == CauseType::Social
            && cause.evidence.iter().any(|e| TIME_OR_ENERGY.is_match(&e.quote))
        {
            out.push(format!(
                "cause {i}: evidence mentions lack of time or energy but is labelled social; physical usually takes precedence"
            ));
        }
    }
    out
}

/// Review flags for a persisted cause set on a post of `population`.
pub fn review_flags(cause_set: &CauseSet, population: Population) -> Vec<String> {
    if population == Population::NonCaregiver && cause_set.causes.iter().any(|c| c.caregiving_related) {
        vec!["caregiving-related cause on a non-caregiver post".to_string()]
    } else {
        Vec::new()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCause {
    cause_type: CauseType,
    caregiving_related: bool,
    evidence: Vec<RawEvidence>,
    #[serde(default)]
    explanation: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCauses {
    causes: Vec<RawCause>,
}

pub fn parse_causes(text: &str, value: &Value) -> std::result::Result<Vec<Cause>, Vec<Violation>> {
    let raw: RawCauses = evidence::from_value(value)?;
    let mut out = Vec::new();
    let causes: Vec<Cause> = raw
        .causes
        .into_iter()
        .enumerate()
        .map(|(i, c)| Cause {
            cause_type: c.cause_type,
            caregiving_related: c.caregiving_related,
            evidence: evidence::resolve_all(text, &c.evidence, &format!("/causes/{i}"), &mut out),
            explanation: c.explanation,
        })
        .collect();
    if !out.is_empty() {
        return Err(out);
    }
    let violations = validate_causes(text, &causes);
    if violations.is_empty() {
        Ok(causes)
    } else {
        Err(violations)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCriteria {
    pub cause_type: CauseType,
    pub criteria: String,
    pub guidelines: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Framework {
    #[serde(rename = "type")]
    pub types: Vec<TypeCriteria>,
}

impl Framework {
    pub fn from_toml(src: &str) -> Result<Self> {
        let f: Framework = toml::from_str(src).map_err(|e| Error::parse("cause framework", e))?;
        f.validate()?;
        Ok(f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&src)
    }

    pub fn shipped() -> Self {
        Self::from_toml(include_str!("../assets/causes.toml")).expect("shipped framework is valid")
    }

    /// One entry per cause type.
    pub fn validate(&self) -> Result<()> {
        let listed: BTreeSet<CauseType> = self.types.iter().map(|t| t.cause_type).collect();
        if listed.len() != self.types.len() || listed.len() != CauseType::ALL.len() {
            return Err(Error::Config(format!(
                "cause framework must list each of the {} types exactly once",
                CauseType::ALL.len()
            )));
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for t in &self.types {
            let _ = writeln!(out, "- {}: {}\n  Guidance: {}", t.cause_type, t.criteria, t.guidelines);
        }
        out
    }
}

pub fn categorize(
    call: &StageCall<'_>,
    post: &Post,
    framework: &Framework,
    include_title: bool,
) -> Result<Annotated<CauseSet>> {
    let text = post.analysis_text(include_title);
    let mut bindings = Bindings::new();
    bindings.insert("post_text".into(), text.clone());
    bindings.insert("framework".into(), framework.render());
    let result = call.run(&bindings, |v| parse_causes(&text, v))?;
    let cause_set = CauseSet {
        post_id: post.post_id.clone(),
        causes: result.value,
    };
    Ok(Annotated {
        provenance: result.provenance,
        warnings: warnings(&cause_set),
        value: cause_set,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    const TEXT: &str = "I have no friends nearby since we moved. Between work and looking after dad I have no time for anyone. My brother never offers to help.";

    fn cause(t: CauseType, flag: bool, quote: &str) -> Cause {
        Cause {
            cause_type: t,
            caregiving_related: flag,
            evidence: vec![EvidenceSpan::locate(TEXT, quote).unwrap_or(EvidenceSpan {
                start: 0,
                end: quote.chars().count(),
                quote: quote.into(),
            })],
            explanation: String::new(),
        }
    }

    fn set(causes: Vec<Cause>) -> CauseSet {
        CauseSet {
            post_id: PostId::from("p"),
            causes,
        }
    }

    #[test]
    fn valid_set_has_no_violations() {
        let s = set(vec![
            cause(CauseType::Social, false, "I have no friends nearby"),
            cause(CauseType::Physical, true, "I have no time for anyone"),
            cause(CauseType::Network, true, "My brother never offers to help"),
        ]);
        assert!(validate_cause_set(TEXT, &s).is_empty());
        assert_eq!(s.presence().len(), 3);
    }

    #[test]
    fn empty_set_is_vacuously_valid() {
        assert!(validate_cause_set(TEXT, &set(vec![])).is_empty());
    }

    #[test]
    fn shared_span_is_evidence_reuse() {
        let s = set(vec![
            cause(CauseType::Social, false, "I have no friends nearby"),
            cause(CauseType::Emotional, false, "no friends"),
        ]);
        let v = validate_cause_set(TEXT, &s);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::EvidenceReuse);
        assert_eq!(v[0].kind.as_str(), "evidence reuse");
    }

    #[test]
    fn fabricated_quote_duplicate_pair_and_empty_evidence() {
        let mut empty = cause(CauseType::Other, false, "x");
        empty.evidence.clear();
        let s = set(vec![
            cause(CauseType::Relational, true, "nobody gets what I do"),
            cause(CauseType::Network, true, "My brother never offers to help"),
            cause(CauseType::Network, true, "looking after dad"),
            empty,
        ]);
        let kinds: Vec<ViolationKind> = validate_cause_set(TEXT, &s).into_iter().map(|v| v.kind).collect();
        assert!(kinds.contains(&ViolationKind::NotASubstring));
        assert!(kinds.contains(&ViolationKind::DuplicateCause));
        assert!(kinds.contains(&ViolationKind::EmptyEvidence));
    }

    #[test]
    fn time_as_social_warns_and_noncaregiver_flag_is_raised() {
        let s = set(vec![cause(CauseType::Social, true, "I have no time for anyone")]);
        assert_eq!(warnings(&s).len(), 1);
        assert_eq!(review_flags(&s, Population::NonCaregiver).len(), 1);
        assert!(review_flags(&s, Population::Caregiver).is_empty());
        let physical = set(vec![cause(CauseType::Physical, true, "I have no time for anyone")]);
        assert!(warnings(&physical).is_empty());
    }

    #[test]
    fn parse_resolves_quotes_and_rejects_reuse() {
        let ok = parse_causes(
            TEXT,
            &json!({"causes": [
                {"cause_type": "physical", "caregiving_related": true, "evidence": [{"quote": "I have no time for anyone"}], "explanation": "duties"}
            ]}),
        )
        .unwrap();
        assert_eq!(ok[0].evidence[0].quote, "I have no time for anyone");
        let reuse = parse_causes(
            TEXT,
            &json!({"causes": [
                {"cause_type": "physical", "caregiving_related": true, "evidence": [{"quote": "no time for anyone"}]},
                {"cause_type": "social", "caregiving_related": true, "evidence": [{"quote": "time for"}]}
            ]}),
        )
        .unwrap_err();
        assert_eq!(reuse[0].kind, ViolationKind::EvidenceReuse);
        let unknown = parse_causes(TEXT, &json!({"causes": [{"cause_type": "spiritual", "caregiving_related": false, "evidence": []}]}));
        assert_eq!(unknown.unwrap_err()[0].kind, ViolationKind::Schema);
    }

    #[test]
    fn shipped_framework_covers_all_types() {
        let f = Framework::shipped();
        assert_eq!(f.types.len(), 7);
        let mut broken = f.clone();
        broken.types.pop();
        assert!(broken.validate().is_err());
    }
}
