//! Agreement and accuracy math against human gold files: exact-match item
//! accuracy, row-normalized confusion matrices, multi-label P/R/F1, demographic
//! accuracy, Cohen's kappa, and gold merging.
//!
//! All rates are fractions in [0, 1]; multiply by 100 for display.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::causes::{self, Cause, CauseType};
use crate::corpus::{Post, PostId};
use crate::demographics::{Attribute, DemographicProfile};
use crate::error::{Error, Result};
use crate::evidence::{Violation, ViolationKind};
use crate::jsonl;
use crate::loneliness::{self, ItemJudgment, ItemLabel, ITEM_COUNT};
use crate::relevance::RelevanceVerdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Relevance,
    LonelinessItems,
    Causes,
    Demographics,
    Contamination,
}

impl Task {
    pub const ALL: [Task; 5] = [
        Task::Relevance,
        Task::LonelinessItems,
        Task::Causes,
        Task::Demographics,
        Task::Contamination,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Relevance => "relevance",
            Task::LonelinessItems => "loneliness_items",
            Task::Causes => "causes",
            Task::Demographics => "demographics",
            Task::Contamination => "contamination",
        }
    }

    pub fn parse(s: &str) -> Option<Task> {
        Task::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether a post sampled from a non-caregiver community was written by a
/// caregiver.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContaminationLabel {
    pub caregiver_author: bool,
}

/// Labels in the same shapes the pipeline produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", content = "labels", rename_all = "snake_case")]
pub enum GoldLabels {
    Relevance(RelevanceVerdict),
    LonelinessItems(Vec<ItemJudgment>),
    Causes(Vec<Cause>),
    Demographics(DemographicProfile),
    Contamination(ContaminationLabel),
}

impl GoldLabels {
    pub fn task(&self) -> Task {
        match self {
            GoldLabels::Relevance(_) => Task::Relevance,
            GoldLabels::LonelinessItems(_) => Task::LonelinessItems,
            GoldLabels::Causes(_) => Task::Causes,
            GoldLabels::Demographics(_) => Task::Demographics,
            GoldLabels::Contamination(_) => Task::Contamination,
        }
    }

    /// Parses a bare label payload for `task`, reporting shape problems as
    /// violations.
    pub fn from_value(task: Task, labels: &Value) -> std::result::Result<GoldLabels, Vec<Violation>> {
        let labels: GoldLabels = serde_json::from_value(json!({"task": task, "labels": labels}))
            .map_err(|e| vec![Violation::new(ViolationKind::Schema, "/labels", e.to_string())])?;
        let structural = labels.check_structure();
        if structural.is_empty() {
            Ok(labels)
        } else {
            Err(structural)
        }
    }

    pub fn labels_value(&self) -> Value {
        serde_json::to_value(self).expect("labels serialize")["labels"].take()
    }

    /// Invariants that need no post text.
    pub fn check_structure(&self) -> Vec<Violation> {
        match self {
            GoldLabels::LonelinessItems(items) => loneliness::check_structure(items),
            GoldLabels::Causes(causes) => causes::check_structure(causes),
            GoldLabels::Relevance(v) if v.relevant && v.evidence.is_empty() => vec![Violation::new(
                ViolationKind::EmptyEvidence,
                "/evidence",
                "a relevant verdict needs at least one quote",
            )],
            _ => Vec::new(),
        }
    }

    /// Every invariant, including evidence against the post text. Human
    /// submissions and model outputs share these checks.
    pub fn validate(&self, text: &str) -> Vec<Violation> {
        match self {
            GoldLabels::Relevance(v) => v.check(text),
            GoldLabels::LonelinessItems(items) => loneliness::check_judgments(text, items),
            GoldLabels::Causes(c) => causes::validate_causes(text, c),
            GoldLabels::Demographics(p) => p.check(text),
            GoldLabels::Contamination(_) => Vec::new(),
        }
    }

    /// Categorical fields compared for agreement, in a fixed order.
    pub fn fields(&self) -> Vec<(String, String)> {
        match self {
            GoldLabels::Relevance(v) => vec![("relevant".into(), v.relevant.to_string())],
            GoldLabels::LonelinessItems(items) => (1..=ITEM_COUNT as u8)
                .map(|id| {
                    let label = items
                        .iter()
                        .find(|j| j.item_id == id)
                        .map(|j| j.label.as_str())
                        .unwrap_or("missing");
                    (format!("item_{id}"), label.to_string())
                })
                .collect(),
            GoldLabels::Causes(c) => {
                let present = causes::presence(c);
                CauseType::ALL
                    .iter()
                    .map(|t| {
                        let label = match (present.contains(&(*t, false)), present.contains(&(*t, true))) {
                            (false, false) => "absent",
                            (true, false) => "not_caregiving",
                            (false, true) => "caregiving",
                            (true, true) => "both",
                        };
                        (t.as_str().to_string(), label.to_string())
                    })
                    .collect()
            }
            GoldLabels::Demographics(p) => Attribute::ALL
                .iter()
                .map(|a| (a.as_str().to_string(), p.label(*a)))
                .collect(),
            GoldLabels::Contamination(c) => vec![("caregiver_author".into(), c.caregiver_author.to_string())],
        }
    }

    /// Label-level agreement; quotes and free text are ignored.
    pub fn agrees(&self, other: &GoldLabels) -> bool {
        self.fields() == other.fields()
    }
}

/// One JSON Lines row of a gold file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub post_id: PostId,
    pub annotator_id: String,
    #[serde(flatten)]
    pub labels: GoldLabels,
}

/// Labels for one task from one annotator (or a merge), keyed by post.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldFile {
    pub task: Task,
    pub annotator_id: String,
    pub entries: BTreeMap<PostId, GoldLabels>,
}

impl GoldFile {
    pub fn new(task: Task, annotator_id: impl Into<String>) -> Self {
        GoldFile {
            task,
            annotator_id: annotator_id.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, post_id: PostId, labels: GoldLabels) -> Result<()> {
        if labels.task() != self.task {
            return Err(Error::TaskMismatch(self.task.to_string(), labels.task().to_string()));
        }
        let structural = labels.check_structure();
        if !structural.is_empty() {
            return Err(Error::parse(
                format!("gold labels for {post_id}"),
                structural.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "),
            ));
        }
        if self.entries.contains_key(&post_id) {
            return Err(Error::parse("gold file", format!("post {post_id} appears twice")));
        }
        self.entries.insert(post_id, labels);
        Ok(())
    }

    pub fn from_records(records: Vec<GoldRecord>) -> Result<Self> {
        let first = records.first().ok_or_else(|| Error::Empty("gold file has no records".into()))?;
        let mut file = GoldFile::new(first.labels.task(), first.annotator_id.clone());
        for r in records {
            if r.annotator_id != file.annotator_id {
                return Err(Error::parse(
                    "gold file",
                    format!("mixes annotators `{}` and `{}`", file.annotator_id, r.annotator_id),
                ));
            }
            file.insert(r.post_id, r.labels)?;
        }
        Ok(file)
    }

    pub fn records(&self) -> Vec<GoldRecord> {
        self.entries
            .iter()
            .map(|(id, labels)| GoldRecord {
                post_id: id.clone(),
                annotator_id: self.annotator_id.clone(),
                labels: labels.clone(),
            })
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_records(jsonl::read(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        jsonl::write(path, &self.records())
    }

    pub fn to_jsonl(&self) -> Result<String> {
        jsonl::to_string(&self.records())
    }

    /// Pipeline outputs as a gold-shaped file, for use as predictions. Posts
    /// without the task's output are skipped.
    pub fn from_posts<'a>(posts: impl IntoIterator<Item = &'a Post>, task: Task, annotator_id: &str) -> Result<Self> {
        let mut file = GoldFile::new(task, annotator_id);
        for post in posts {
            let labels = match task {
                Task::Relevance => post.relevance.as_ref().map(|a| GoldLabels::Relevance(a.value.clone())),
                Task::LonelinessItems => post
                    .loneliness
                    .as_ref()
                    .map(|a| GoldLabels::LonelinessItems(a.value.judgments.clone())),
                Task::Causes => post.causes.as_ref().map(|a| GoldLabels::Causes(a.value.causes.clone())),
                Task::Demographics => post.demographics.as_ref().map(|a| GoldLabels::Demographics(a.value.clone())),
                Task::Contamination => None,
            };
            if let Some(labels) = labels {
                file.insert(post.post_id.clone(), labels)?;
            }
        }
        Ok(file)
    }
}

type Aligned<'a> = Vec<(&'a PostId, &'a GoldLabels, &'a GoldLabels)>;

/// Pairs predictions with gold. Both must cover the same posts.
fn align<'a>(pred: &'a GoldFile, gold: &'a GoldFile, task: Task) -> Result<Aligned<'a>> {
    for f in [pred, gold] {
        if f.task != task {
            return Err(Error::TaskMismatch(task.to_string(), f.task.to_string()));
        }
    }
    let p: BTreeSet<&PostId> = pred.entries.keys().collect();
    let g: BTreeSet<&PostId> = gold.entries.keys().collect();
    if p != g {
        let missing_in_pred: Vec<_> = g.difference(&p).collect();
        let missing_in_gold: Vec<_> = p.difference(&g).collect();
        let example = missing_in_pred
            .first()
            .or(missing_in_gold.first())
            .map(|id| id.to_string())
            .unwrap_or_default();
        return Err(Error::PostIdMismatch {
            missing_in_pred: missing_in_pred.len(),
            missing_in_gold: missing_in_gold.len(),
            example,
        });
    }
    if p.is_empty() {
        return Err(Error::Empty("no posts to compare".into()));
    }
    Ok(gold
        .entries
        .iter()
        .map(|(id, g)| (id, &pred.entries[id], g))
        .collect())
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemAccuracyRow {
    pub item_id: u8,
    pub correct: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemAccuracy {
    pub n: u64,
    pub items: Vec<ItemAccuracyRow>,
    /// Unweighted mean of the per-item accuracies.
    pub overall: f64,
}

fn item_labels(labels: &GoldLabels) -> BTreeMap<u8, ItemLabel> {
    match labels {
        GoldLabels::LonelinessItems(items) => items.iter().map(|j| (j.item_id, j.label)).collect(),
        _ => BTreeMap::new(),
    }
}

/// Exact-match accuracy per item.
pub fn item_accuracy(pred: &GoldFile, gold: &GoldFile) -> Result<ItemAccuracy> {
    let pairs = align(pred, gold, Task::LonelinessItems)?;
    let n = pairs.len() as u64;
    let mut correct = [0u64; ITEM_COUNT];
    for (_, p, g) in &pairs {
        let (p, g) = (item_labels(p), item_labels(g));
        for (i, c) in correct.iter_mut().enumerate() {
            let id = i as u8 + 1;
            if p.get(&id) == g.get(&id) {
                *c += 1;
            }
        }
    }
    let items: Vec<ItemAccuracyRow> = correct
        .iter()
        .enumerate()
        .map(|(i, &c)| ItemAccuracyRow {
            item_id: i as u8 + 1,
            correct: c,
            accuracy: ratio(c, n),
        })
        .collect();
    let overall = items.iter().map(|r| r.accuracy).sum::<f64>() / ITEM_COUNT as f64;
    Ok(ItemAccuracy { n, items, overall })
}

/// Counts indexed `[gold][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let n = labels.len();
        ConfusionMatrix {
            labels,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn add(&mut self, gold: &str, predicted: &str) {
        let g = self.labels.iter().position(|l| l == gold);
        let p = self.labels.iter().position(|l| l == predicted);
        if let (Some(g), Some(p)) = (g, p) {
            self.counts[g][p] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Each gold row divided by its sum; `None` for an empty row.
    pub fn row_normalized(&self) -> Vec<Option<Vec<f64>>> {
        self.counts
            .iter()
            .map(|row| {
                let sum: u64 = row.iter().sum();
                (sum > 0).then(|| row.iter().map(|&c| c as f64 / sum as f64).collect())
            })
            .collect()
    }
}

/// Gold-vs-predicted item labels pooled over all items and posts.
pub fn label_confusion(pred: &GoldFile, gold: &GoldFile) -> Result<ConfusionMatrix> {
    let pairs = align(pred, gold, Task::LonelinessItems)?;
    let mut m = ConfusionMatrix::new(ItemLabel::ALL.iter().map(|l| l.as_str().to_string()).collect());
    for (_, p, g) in &pairs {
        let p = item_labels(p);
        for (id, gl) in item_labels(g) {
            if let Some(pl) = p.get(&id) {
                m.add(gl.as_str(), pl.as_str());
            }
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// Zero denominators give 0.
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Prf {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CauseAxis {
    /// Presence of a type regardless of the caregiving flag.
    TypeOnly,
    /// Presence of a type flagged as caregiving-related.
    TypeAndFlag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauseRow {
    pub cause_type: CauseType,
    pub prf: Prf,
    pub accuracy: f64,
    /// Gold positives.
    pub count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroPrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauseMetrics {
    pub axis: CauseAxis,
    pub n: u64,
    pub rows: Vec<CauseRow>,
    pub micro: Prf,
    /// Unweighted mean over all seven types, including types with no
    /// positives on either side.
    #[serde(rename = "macro")]
    pub macro_avg: MacroPrf,
    /// Mean of the per-type accuracies.
    pub aggregate_accuracy: f64,
}

/// Builds the metrics table from per-type post-level counts over `n` posts.
/// Types missing from `counts` are all-negative rows.
pub fn cause_metrics_from_counts(axis: CauseAxis, n: u64, counts: &[(CauseType, u64, u64, u64)]) -> CauseMetrics {
    let rows: Vec<CauseRow> = CauseType::ALL
        .iter()
        .map(|&t| {
            let (tp, fp, fn_) = counts
                .iter()
                .find(|c| c.0 == t)
                .map(|c| (c.1, c.2, c.3))
                .unwrap_or((0, 0, 0));
            CauseRow {
                cause_type: t,
                prf: Prf::from_counts(tp, fp, fn_),
                accuracy: ratio(n.saturating_sub(fp + fn_), n),
                count: tp + fn_,
            }
        })
        .collect();
    let (tp, fp, fn_) = rows
        .iter()
        .fold((0, 0, 0), |(a, b, c), r| (a + r.prf.tp, b + r.prf.fp, c + r.prf.fn_));
    let k = rows.len() as f64;
    CauseMetrics {
        axis,
        n,
        micro: Prf::from_counts(tp, fp, fn_),
        macro_avg: MacroPrf {
            precision: rows.iter().map(|r| r.prf.precision).sum::<f64>() / k,
            recall: rows.iter().map(|r| r.prf.recall).sum::<f64>() / k,
            f1: rows.iter().map(|r| r.prf.f1).sum::<f64>() / k,
        },
        aggregate_accuracy: rows.iter().map(|r| r.accuracy).sum::<f64>() / k,
        rows,
    }
}

fn present_types(labels: &GoldLabels, axis: CauseAxis) -> BTreeSet<CauseType> {
    match labels {
        GoldLabels::Causes(c) => c
            .iter()
            .filter(|c| axis == CauseAxis::TypeOnly || c.caregiving_related)
            .map(|c| c.cause_type)
            .collect(),
        _ => BTreeSet::new(),
    }
}

/// Post-level presence P/R/F1 per cause type with micro and macro pooling.
pub fn cause_prf(pred: &GoldFile, gold: &GoldFile, axis: CauseAxis) -> Result<CauseMetrics> {
    let pairs = align(pred, gold, Task::Causes)?;
    let mut counts: BTreeMap<CauseType, (u64, u64, u64)> = BTreeMap::new();
    for (_, p, g) in &pairs {
        let (p, g) = (present_types(p, axis), present_types(g, axis));
        for t in CauseType::ALL {
            let e = counts.entry(t).or_default();
            match (p.contains(&t), g.contains(&t)) {
                (true, true) => e.0 += 1,
                (true, false) => e.1 += 1,
                (false, true) => e.2 += 1,
                (false, false) => {}
            }
        }
    }
    let counts: Vec<_> = counts.into_iter().map(|(t, (a, b, c))| (t, a, b, c)).collect();
    Ok(cause_metrics_from_counts(axis, pairs.len() as u64, &counts))
}

/// Relevance screen P/R/F1 with `relevant = true` as the positive class.
pub fn relevance_prf(pred: &GoldFile, gold: &GoldFile) -> Result<Prf> {
    let pairs = align(pred, gold, Task::Relevance)?;
    let positive = |l: &GoldLabels| matches!(l, GoldLabels::Relevance(v) if v.relevant);
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (_, p, g) in pairs {
        match (positive(p), positive(g)) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    Ok(Prf::from_counts(tp, fp, fn_))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeAccuracy {
    pub attribute: Attribute,
    pub correct: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicAccuracy {
    pub n: u64,
    pub attributes: Vec<AttributeAccuracy>,
    /// Unweighted mean over the nine attributes.
    pub overall: f64,
}

/// Exact match on normalized labels; Unknown = Unknown is correct.
pub fn demographic_accuracy(pred: &GoldFile, gold: &GoldFile) -> Result<DemographicAccuracy> {
    let pairs = align(pred, gold, Task::Demographics)?;
    let n = pairs.len() as u64;
    let label = |l: &GoldLabels, a: Attribute| match l {
        GoldLabels::Demographics(p) => p.label(a),
        _ => String::new(),
    };
    let attributes: Vec<AttributeAccuracy> = Attribute::ALL
        .iter()
        .map(|&a| {
            let correct = pairs.iter().filter(|(_, p, g)| label(p, a) == label(g, a)).count() as u64;
            AttributeAccuracy {
                attribute: a,
                correct,
                accuracy: ratio(correct, n),
            }
        })
        .collect();
    let overall = attributes.iter().map(|a| a.accuracy).sum::<f64>() / attributes.len() as f64;
    Ok(DemographicAccuracy { n, attributes, overall })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum KappaValue {
    Defined { kappa: f64, p_o: f64, p_e: f64 },
    /// Both annotators' marginals make chance agreement certain (p_e = 1).
    Undefined { p_o: f64 },
}

impl KappaValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            KappaValue::Defined { kappa, .. } => Some(*kappa),
            KappaValue::Undefined { .. } => None,
        }
    }
}

/// Cohen's kappa over paired categorical labels.
pub fn kappa<A: AsRef<str>, B: AsRef<str>>(pairs: &[(A, B)]) -> Result<KappaValue> {
    if pairs.is_empty() {
        return Err(Error::Empty("kappa needs at least one pair".into()));
    }
    let n = pairs.len() as f64;
    let mut a_counts: BTreeMap<&str, f64> = BTreeMap::new();
    let mut b_counts: BTreeMap<&str, f64> = BTreeMap::new();
    let mut agree = 0.0;
    for (a, b) in pairs {
        let (a, b) = (a.as_ref(), b.as_ref());
        *a_counts.entry(a).or_default() += 1.0;
        *b_counts.entry(b).or_default() += 1.0;
        if a == b {
            agree += 1.0;
        }
    }
    let p_o = agree / n;
    let p_e: f64 = a_counts
        .iter()
        .map(|(label, ca)| ca / n * b_counts.get(label).copied().unwrap_or(0.0) / n)
        .sum();
    if (1.0 - p_e).abs() < 1e-12 {
        return Ok(KappaValue::Undefined { p_o });
    }
    Ok(KappaValue::Defined {
        kappa: (p_o - p_e) / (1.0 - p_e),
        p_o,
        p_e,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldKappa {
    pub field: String,
    pub value: KappaValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaReport {
    pub task: Task,
    pub n_overlap: usize,
    pub fields: Vec<FieldKappa>,
    /// Mean over fields with a defined kappa; `None` when none is defined.
    pub mean: Option<f64>,
}

/// Per-field kappa between two annotators over the posts both labelled.
pub fn cohen_kappa(a: &GoldFile, b: &GoldFile) -> Result<KappaReport> {
    if a.task != b.task {
        return Err(Error::TaskMismatch(a.task.to_string(), b.task.to_string()));
    }
    let shared: Vec<(&GoldLabels, &GoldLabels)> = a
        .entries
        .iter()
        .filter_map(|(id, la)| b.entries.get(id).map(|lb| (la, lb)))
        .collect();
    if shared.is_empty() {
        return Err(Error::NoOverlap);
    }
    let mut columns: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
    let mut order = Vec::new();
    for (la, lb) in &shared {
        let fb: BTreeMap<String, String> = lb.fields().into_iter().collect();
        for (field, va) in la.fields() {
            let vb = fb.get(&field).cloned().unwrap_or_default();
            if !columns.contains_key(&field) {
                order.push(field.clone());
            }
            columns.entry(field).or_default().push((va, vb));
        }
    }
    let mut fields = Vec::with_capacity(order.len());
    for field in order {
        let value = kappa(&columns[&field])?;
        fields.push(FieldKappa { field, value });
    }
    let defined: Vec<f64> = fields.iter().filter_map(|f| f.value.value()).collect();
    let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(KappaReport {
        task: a.task,
        n_overlap: shared.len(),
        fields,
        mean,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeStrategy {
    /// On conflict keep the earliest file's labels and log the override.
    PriorityOrder,
    /// Every conflict needs an adjudication record.
    Adjudicated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjudicationRecord {
    pub post_id: PostId,
    pub adjudicator: String,
    #[serde(default)]
    pub note: String,
    #[serde(flatten)]
    pub labels: GoldLabels,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Override {
    pub post_id: PostId,
    pub kept: String,
    pub overridden: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutcome {
    pub gold: GoldFile,
    pub overrides: Vec<Override>,
    pub adjudicated: usize,
}

pub const MERGED_ANNOTATOR: &str = "merged";

pub fn merge_gold(files: &[GoldFile], strategy: MergeStrategy, adjudications: &[AdjudicationRecord]) -> Result<MergeOutcome> {
    let first = files.first().ok_or_else(|| Error::Empty("no gold files to merge".into()))?;
    let task = first.task;
    if let Some(other) = files.iter().find(|f| f.task != task) {
        return Err(Error::TaskMismatch(task.to_string(), other.task.to_string()));
    }
    if let Some(r) = adjudications.iter().find(|r| r.labels.task() != task) {
        return Err(Error::TaskMismatch(task.to_string(), r.labels.task().to_string()));
    }
    let decisions: BTreeMap<&PostId, &AdjudicationRecord> = adjudications.iter().map(|r| (&r.post_id, r)).collect();
    let ids: BTreeSet<&PostId> = files.iter().flat_map(|f| f.entries.keys()).collect();

    let mut gold = GoldFile::new(task, MERGED_ANNOTATOR);
    let mut overrides = Vec::new();
    let mut missing = Vec::new();
    let mut adjudicated = 0;
    for id in ids {
        let votes: Vec<(&str, &GoldLabels)> = files
            .iter()
            .filter_map(|f| f.entries.get(id).map(|l| (f.annotator_id.as_str(), l)))
            .collect();
        let conflict = votes.iter().any(|(_, l)| !l.agrees(votes[0].1));
        let chosen = match (strategy, decisions.get(id)) {
            (MergeStrategy::Adjudicated, Some(record)) => {
                adjudicated += 1;
                record.labels.clone()
            }
            (MergeStrategy::Adjudicated, None) if conflict => {
                missing.push(id.to_string());
                continue;
            }
            _ => {
                if conflict {
                    let overridden: Vec<String> = votes
                        .iter()
                        .filter(|(_, l)| !l.agrees(votes[0].1))
                        .map(|(a, _)| a.to_string())
                        .collect();
                    tracing::info!(post = %id, kept = votes[0].0, ?overridden, "priority merge override");
                    overrides.push(Override {
                        post_id: id.clone(),
                        kept: votes[0].0.to_string(),
                        overridden,
                    });
                }
                votes[0].1.clone()
            }
        };
        gold.insert(id.clone(), chosen)?;
    }
    if !missing.is_empty() {
        return Err(Error::MissingAdjudication(missing));
    }
    Ok(MergeOutcome {
        gold,
        overrides,
        adjudicated,
    })
}

pub fn load_adjudications(path: &Path) -> Result<Vec<AdjudicationRecord>> {
    jsonl::read(path)
}
