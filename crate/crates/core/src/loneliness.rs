//! The 15-item loneliness evaluation: one three-way judgment per item, each
//! backed by verbatim evidence, summed into a score and gated at a
//! threshold.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::Post;
use crate::error::{Error, Result};
use crate::evidence::{self, EvidenceSpan, RawEvidence, Violation, ViolationKind};
use crate::gateway::{Annotated, Bindings, StageCall};

pub const ITEM_COUNT: usize = 15;
pub const DEFAULT_THRESHOLD: i32 = 7;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleItem {
    pub item_id: u8,
    pub statement: String,
    pub coding_guidelines: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub examples: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scale {
    #[serde(rename = "item")]
    pub items: Vec<ScaleItem>,
}

impl Scale {
    pub fn from_toml(src: &str) -> Result<Self> {
        let scale: Scale = toml::from_str(src).map_err(|e| Error::parse("scale", e))?;
        scale.validate()?;
        Ok(scale)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&src)
    }

    pub fn shipped() -> Self {
        Self::from_toml(include_str!("../assets/scale.toml")).expect("shipped scale is valid")
    }

    /// Exactly 15 items with ids 1..=15 in order.
    pub fn validate(&self) -> Result<()> {
        if self.items.len() != ITEM_COUNT {
            return Err(Error::Config(format!(
                "scale must have {ITEM_COUNT} items, found {}",
                self.items.len()
            )));
        }
        for (i, item) in self.items.iter().enumerate() {
            if item.item_id as usize != i + 1 {
                return Err(Error::Config(format!(
                    "scale item ids must run 1..={ITEM_COUNT} in order; position {} has id {}",
                    i + 1,
                    item.item_id
                )));
            }
            if item.statement.trim().is_empty() {
                return Err(Error::Config(format!("scale item {} has no statement", item.item_id)));
            }
        }
        Ok(())
    }

    /// The scale as prompt text.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            let _ = writeln!(out, "{}. {}\n   Guidance: {}", item.item_id, item.statement, item.coding_guidelines);
            if let Some(ex) = &item.examples {
                let _ = writeln!(out, "   Examples: {ex}");
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemLabel {
    Yes,
    No,
    NotJudgeable,
}

impl ItemLabel {
    pub const ALL: [ItemLabel; 3] = [ItemLabel::Yes, ItemLabel::No, ItemLabel::NotJudgeable];

    /// Yes counts +1, No -1, not judgeable 0.
    pub fn value(&self) -> i32 {
        match self {
            ItemLabel::Yes => 1,
            ItemLabel::No => -1,
            ItemLabel::NotJudgeable => 0,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ItemLabel::Yes => "yes",
            ItemLabel::No => "no",
            ItemLabel::NotJudgeable => "not_judgeable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemJudgment {
    pub item_id: u8,
    pub label: ItemLabel,
    #[serde(default)]
    pub evidence: Vec<EvidenceSpan>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LonelinessAssessment {
    pub judgments: Vec<ItemJudgment>,
    pub score: i32,
    pub passed: bool,
}

impl LonelinessAssessment {
    /// Scores `judgments` (sorted by item id) and applies the gate.
    pub fn new(mut judgments: Vec<ItemJudgment>, threshold: i32) -> Result<Self> {
        let score = score(&judgments)?;
        judgments.sort_by_key(|j| j.item_id);
        Ok(LonelinessAssessment {
            judgments,
            score,
            passed: score >= threshold,
        })
    }

    pub fn label(&self, item_id: u8) -> Option<ItemLabel> {
        self.judgments.iter().find(|j| j.item_id == item_id).map(|j| j.label)
    }
}

/// `#yes - #no` over exactly one judgment per item 1..=15.
pub fn score(judgments: &[ItemJudgment]) -> Result<i32> {
    let mut seen = BTreeSet::new();
    for j in judgments {
        if !(1..=ITEM_COUNT as u8).contains(&j.item_id) {
            return Err(Error::Judgments(format!("item id {} is out of range", j.item_id)));
        }
        if !seen.insert(j.item_id) {
            return Err(Error::Judgments(format!("item {} judged twice", j.item_id)));
        }
    }
    if seen.len() != ITEM_COUNT {
        let missing: Vec<String> = (1..=ITEM_COUNT as u8)
            .filter(|i| !seen.contains(i))
            .map(|i| i.to_string())
            .collect();
        return Err(Error::Judgments(format!("missing items {}", missing.join(", "))));
    }
    Ok(judgments.iter().map(|j| j.label.value()).sum())
}

/// Inclusive gate: `score >= threshold`.
pub fn gate(assessment: &LonelinessAssessment, threshold: i32) -> bool {
    assessment.score >= threshold
}

/// Shape and evidence invariants for a judgment set against the analyzed
/// text. Used for model output and human submissions alike.
pub fn check_judgments(text: &str, judgments: &[ItemJudgment]) -> Vec<Violation> {
    let mut out = check_structure(judgments);
    for (i, j) in judgments.iter().enumerate() {
        evidence::check_all(text, &j.evidence, &format!("/items/{i}"), &mut out);
    }
    out
}

/// The checks that do not need the post text.
pub fn check_structure(judgments: &[ItemJudgment]) -> Vec<Violation> {
    let mut out = Vec::new();
    check_shape(judgments.iter().map(|j| j.item_id), &mut out);
    for (i, j) in judgments.iter().enumerate() {
        check_label_evidence(j.label, j.evidence.len(), &format!("/items/{i}"), &mut out);
    }
    out
}

fn check_shape(ids: impl Iterator<Item = u8>, out: &mut Vec<Violation>) {
    let mut seen = BTreeSet::new();
    for (i, id) in ids.enumerate() {
        let path = format!("/items/{i}/item_id");
        if !(1..=ITEM_COUNT as u8).contains(&id) {
            out.push(Violation::new(ViolationKind::UnknownItem, path, format!("item {id}")));
        } else if !seen.insert(id) {
            out.push(Violation::new(ViolationKind::DuplicateItem, path, format!("item {id}")));
        }
    }
    for id in 1..=ITEM_COUNT as u8 {
        if !seen.contains(&id) {
            out.push(Violation::new(ViolationKind::MissingItem, "/items", format!("item {id}")));
        }
    }
}

fn check_label_evidence(label: ItemLabel, n_evidence: usize, path: &str, out: &mut Vec<Violation>) {
    match label {
        ItemLabel::Yes | ItemLabel::No if n_evidence == 0 => out.push(Violation::new(
            ViolationKind::EmptyEvidence,
            format!("{path}/evidence"),
            format!("label `{}` needs a quote", label.as_str()),
        )),
        ItemLabel::NotJudgeable if n_evidence > 0 => out.push(Violation::new(
            ViolationKind::UnexpectedEvidence,
            format!("{path}/evidence"),
            "not_judgeable takes no evidence",
        )),
        _ => {}
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJudgment {
    item_id: u8,
    label: ItemLabel,
    #[serde(default)]
    evidence: Vec<RawEvidence>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAssessment {
    items: Vec<RawJudgment>,
}

/// Converts `{"items": [...]}` into judgments, resolving quotes against
/// `text` and enforcing every invariant.
pub fn parse_judgments(text: &str, value: &Value) -> std::result::Result<Vec<ItemJudgment>, Vec<Violation>> {
    let raw: RawAssessment = evidence::from_value(value)?;
    let mut out = Vec::new();
    check_shape(raw.items.iter().map(|j| j.item_id), &mut out);
    let mut judgments = Vec::with_capacity(raw.items.len());
    for (i, j) in raw.items.into_iter().enumerate() {
        let path = format!("/items/{i}");
        check_label_evidence(j.label, j.evidence.len(), &path, &mut out);
        let spans = evidence::resolve_all(text, &j.evidence, &path, &mut out);
        judgments.push(ItemJudgment {
            item_id: j.item_id,
            label: j.label,
            evidence: spans,
        });
    }
    if out.is_empty() {
        judgments.sort_by_key(|j| j.item_id);
        Ok(judgments)
    } else {
        Err(out)
    }
}

/// One provider call per post covering all 15 items.
pub fn evaluate(
    call: &StageCall<'_>,
    post: &Post,
    scale: &Scale,
    include_title: bool,
    threshold: i32,
) -> Result<Annotated<LonelinessAssessment>> {
    scale.validate()?;
    let text = post.analysis_text(include_title);
    let mut bindings = Bindings::new();
    bindings.insert("post_text".into(), text.clone());
    bindings.insert("scale".into(), scale.render());
    let judged = call.run(&bindings, |v| parse_judgments(&text, v))?;
    Ok(Annotated {
        provenance: judged.provenance,
        value: LonelinessAssessment::new(judged.value, threshold)?,
        warnings: judged.warnings,
    })
}
