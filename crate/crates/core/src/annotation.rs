//! Annotation tasks and the board that tracks claims, submissions,
//! adjudication and gold export. The HTTP layer in [`crate::service`] is a
//! thin wrapper over [`TaskBoard`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Post, PostId};
use crate::error::Error;
use crate::evidence::{EvidenceSpan, Violation, ViolationKind};
use crate::harness::{self, AdjudicationRecord, GoldFile, GoldLabels, KappaReport, MergeStrategy};

pub use crate::harness::Task as TaskKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Open,
    Submitted,
    Adjudicating,
    Merged,
}

impl TaskStatus {
    pub fn parse(s: &str) -> Option<TaskStatus> {
        match s {
            "open" => Some(TaskStatus::Open),
            "submitted" => Some(TaskStatus::Submitted),
            "adjudicating" => Some(TaskStatus::Adjudicating),
            "merged" => Some(TaskStatus::Merged),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub task_id: String,
    pub kind: TaskKind,
    pub post_id: PostId,
    pub text: String,
    #[serde(default)]
    pub assignees: Vec<String>,
    pub status: TaskStatus,
    /// Final label once merged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<GoldLabels>,
}

impl AnnotationTask {
    pub fn new(kind: TaskKind, post: &Post, include_title: bool) -> Self {
        AnnotationTask {
            task_id: task_id(kind, &post.post_id),
            kind,
            post_id: post.post_id.clone(),
            text: post.analysis_text(include_title),
            assignees: Vec::new(),
            status: TaskStatus::Open,
            label: None,
        }
    }
}

pub fn task_id(kind: TaskKind, post_id: &PostId) -> String {
    format!("{kind}-{post_id}")
}

#[derive(Debug, Error)]
pub enum BoardError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("forbidden: {0}")]
    Forbidden(String),
    #[error("labels failed validation")]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Core(#[from] Error),
}

pub type BoardResult<T> = std::result::Result<T, BoardError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Entry {
    task: AnnotationTask,
    #[serde(default)]
    claims: BTreeMap<String, String>,
    #[serde(default)]
    submissions: BTreeMap<String, GoldLabels>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    adjudication: Option<AdjudicationRecord>,
}

/// In-memory task store. When a state file is set every mutation is
/// written through to it.
#[derive(Debug)]
pub struct TaskBoard {
    posts: BTreeMap<PostId, Post>,
    include_title: bool,
    secret: String,
    state_file: Option<PathBuf>,
    tasks: Mutex<BTreeMap<String, Entry>>,
}

impl TaskBoard {
    pub fn new(posts: impl IntoIterator<Item = Post>, include_title: bool, secret: impl Into<String>) -> Self {
        TaskBoard {
            posts: posts.into_iter().map(|p| (p.post_id.clone(), p)).collect(),
            include_title,
            secret: secret.into(),
            state_file: None,
            tasks: Mutex::new(BTreeMap::new()),
        }
    }

    /// Loads existing state from `path` if present and persists to it from
    /// then on.
    pub fn with_state_file(mut self, path: impl Into<PathBuf>) -> crate::Result<Self> {
        let path = path.into();
        if path.exists() {
            let src = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let entries: Vec<Entry> = serde_json::from_str(&src).map_err(|e| Error::parse("board state", e))?;
            let map = entries.into_iter().map(|e| (e.task.task_id.clone(), e)).collect();
            *self.tasks.lock().unwrap() = map;
        }
        self.state_file = Some(path);
        Ok(self)
    }

    fn persist(&self, tasks: &BTreeMap<String, Entry>) -> BoardResult<()> {
        if let Some(path) = &self.state_file {
            let entries: Vec<&Entry> = tasks.values().collect();
            crate::jsonl::write_json(path, &entries)?;
        }
        Ok(())
    }

    pub fn post(&self, id: &PostId) -> Option<&Post> {
        self.posts.get(id)
    }

    pub fn post_text(&self, id: &PostId) -> Option<String> {
        self.posts.get(id).map(|p| p.analysis_text(self.include_title))
    }

    pub fn create(&self, kind: TaskKind, post_id: &PostId) -> BoardResult<AnnotationTask> {
        let post = self
            .posts
            .get(post_id)
            .ok_or_else(|| BoardError::NotFound(format!("post {post_id}")))?;
        self.insert(AnnotationTask::new(kind, post, self.include_title))
    }

    /// Adds a prepared task, such as one from a contamination audit sheet.
    pub fn insert(&self, task: AnnotationTask) -> BoardResult<AnnotationTask> {
        let mut tasks = self.tasks.lock().unwrap();
        if tasks.contains_key(&task.task_id) {
            return Err(BoardError::Conflict(format!("task {} already exists", task.task_id)));
        }
        tasks.insert(
            task.task_id.clone(),
            Entry {
                task: task.clone(),
                claims: BTreeMap::new(),
                submissions: BTreeMap::new(),
                adjudication: None,
            },
        );
        self.persist(&tasks)?;
        Ok(task)
    }

    pub fn get(&self, task_id: &str) -> BoardResult<AnnotationTask> {
        let tasks = self.tasks.lock().unwrap();
        tasks
            .get(task_id)
            .map(|e| e.task.clone())
            .ok_or_else(|| BoardError::NotFound(format!("task {task_id}")))
    }

    pub fn list(&self, kind: Option<TaskKind>, status: Option<TaskStatus>) -> Vec<AnnotationTask> {
        let tasks = self.tasks.lock().unwrap();
        tasks
            .values()
            .map(|e| &e.task)
            .filter(|t| kind.is_none_or(|k| t.kind == k) && status.is_none_or(|s| t.status == s))
            .cloned()
            .collect()
    }

    fn token(&self, task_id: &str, annotator_id: &str) -> String {
        let mut h = Sha256::new();
        for part in [self.secret.as_str(), task_id, annotator_id] {
            h.update(part.as_bytes());
            h.update([0]);
        }
        hex::encode(&h.finalize()[..16])
    }

    /// Registers an annotator on a task and returns their submission token.
    /// Claiming twice returns the same token.
    pub fn claim(&self, task_id: &str, annotator_id: &str) -> BoardResult<String> {
        if annotator_id.trim().is_empty() {
            return Err(BoardError::Forbidden("annotator_id is required".into()));
        }
        let mut tasks = self.tasks.lock().unwrap();
        let entry = tasks
            .get_mut(task_id)
            .ok_or_else(|| BoardError::NotFound(format!("task {task_id}")))?;
        if entry.task.status == TaskStatus::Merged {
            return Err(BoardError::Conflict(format!("task {task_id} is merged")));
        }
        let token = self.token(task_id, annotator_id);
        if entry.claims.insert(annotator_id.to_string(), token.clone()).is_none() {
            entry.task.assignees.push(annotator_id.to_string());
        }
        self.persist(&tasks)?;
        Ok(token)
    }

    pub fn submit(&self, task_id: &str, annotator_id: &str, token: &str, labels: &Value) -> BoardResult<AnnotationTask> {
        let mut tasks = self.tasks.lock().unwrap();
        let entry = tasks
            .get_mut(task_id)
            .ok_or_else(|| BoardError::NotFound(format!("task {task_id}")))?;
        match entry.claims.get(annotator_id) {
            Some(t) if t == token => {}
            Some(_) => return Err(BoardError::Forbidden("token does not match claim".into())),
            None => return Err(BoardError::Forbidden(format!("{annotator_id} has not claimed {task_id}"))),
        }
        if entry.task.status == TaskStatus::Merged {
            return Err(BoardError::Conflict(format!("task {task_id} is merged")));
        }
        if entry.submissions.contains_key(annotator_id) {
            return Err(BoardError::Conflict(format!("{annotator_id} already submitted {task_id}")));
        }
        let labels = parse_labels(entry.task.kind, &entry.task.text, labels)?;
        entry.submissions.insert(annotator_id.to_string(), labels);
        entry.task.status = submission_status(&entry.submissions);
        let task = entry.task.clone();
        self.persist(&tasks)?;
        Ok(task)
    }

    /// Records the adjudicated label. Merged tasks cannot be adjudicated
    /// again.
    pub fn adjudicate(&self, task_id: &str, adjudicator: &str, note: &str, labels: &Value) -> BoardResult<AnnotationTask> {
        let mut tasks = self.tasks.lock().unwrap();
        let entry = tasks
            .get_mut(task_id)
            .ok_or_else(|| BoardError::NotFound(format!("task {task_id}")))?;
        if entry.task.status == TaskStatus::Merged {
            return Err(BoardError::Conflict(format!("task {task_id} is merged")));
        }
        if entry.submissions.is_empty() {
            return Err(BoardError::Conflict(format!("task {task_id} has no submissions")));
        }
        let labels = parse_labels(entry.task.kind, &entry.task.text, labels)?;
        entry.adjudication = Some(AdjudicationRecord {
            post_id: entry.task.post_id.clone(),
            adjudicator: adjudicator.to_string(),
            note: note.to_string(),
            labels: labels.clone(),
        });
        entry.task.label = Some(labels);
        entry.task.status = TaskStatus::Merged;
        let task = entry.task.clone();
        self.persist(&tasks)?;
        Ok(task)
    }

    fn annotator_file(tasks: &BTreeMap<String, Entry>, kind: TaskKind, annotator_id: &str) -> BoardResult<GoldFile> {
        let mut file = GoldFile::new(kind, annotator_id);
        for e in tasks.values().filter(|e| e.task.kind == kind) {
            if let Some(labels) = e.submissions.get(annotator_id) {
                file.insert(e.task.post_id.clone(), labels.clone())?;
            }
        }
        Ok(file)
    }

    pub fn agreement(&self, kind: TaskKind, a: &str, b: &str) -> BoardResult<KappaReport> {
        let tasks = self.tasks.lock().unwrap();
        let fa = Self::annotator_file(&tasks, kind, a)?;
        let fb = Self::annotator_file(&tasks, kind, b)?;
        Ok(harness::cohen_kappa(&fa, &fb)?)
    }

    /// Merges every submitted task of `kind` into one gold file. Conflicting
    /// submissions must be adjudicated first; exported tasks become merged.
    pub fn export(&self, kind: TaskKind) -> BoardResult<GoldFile> {
        let mut tasks = self.tasks.lock().unwrap();
        let mut annotators: Vec<&str> = tasks
            .values()
            .filter(|e| e.task.kind == kind)
            .flat_map(|e| e.submissions.keys().map(String::as_str))
            .collect();
        annotators.sort();
        annotators.dedup();
        if annotators.is_empty() {
            return Err(BoardError::Conflict(format!("no submissions for {kind}")));
        }
        let files = annotators
            .iter()
            .map(|a| Self::annotator_file(&tasks, kind, a))
            .collect::<BoardResult<Vec<_>>>()?;
        let adjudications: Vec<AdjudicationRecord> = tasks
            .values()
            .filter(|e| e.task.kind == kind)
            .filter_map(|e| e.adjudication.clone())
            .collect();
        let outcome = harness::merge_gold(&files, MergeStrategy::Adjudicated, &adjudications)?;
        for e in tasks.values_mut().filter(|e| e.task.kind == kind) {
            if let Some(labels) = outcome.gold.entries.get(&e.task.post_id) {
                e.task.label = Some(labels.clone());
                e.task.status = TaskStatus::Merged;
            }
        }
        self.persist(&tasks)?;
        Ok(outcome.gold)
    }
}

fn submission_status(submissions: &BTreeMap<String, GoldLabels>) -> TaskStatus {
    let mut it = submissions.values();
    match it.next() {
        None => TaskStatus::Open,
        Some(first) if it.all(|l| l.agrees(first)) => TaskStatus::Submitted,
        Some(_) => TaskStatus::Adjudicating,
    }
}

/// Parses submitted labels and checks them against the task text. Evidence
/// may be given as bare quotes; offsets are filled in from the text.
pub fn parse_labels(kind: TaskKind, text: &str, labels: &Value) -> BoardResult<GoldLabels> {
    let mut labels = labels.clone();
    let mut unlocated = Vec::new();
    fill_offsets(text, &mut labels, "", &mut unlocated);
    if !unlocated.is_empty() {
        return Err(BoardError::Invalid(unlocated));
    }
    let parsed = GoldLabels::from_value(kind, &labels).map_err(BoardError::Invalid)?;
    let violations = parsed.validate(text);
    if violations.is_empty() {
        Ok(parsed)
    } else {
        Err(BoardError::Invalid(violations))
    }
}

fn fill_offsets(text: &str, value: &mut Value, path: &str, unlocated: &mut Vec<Violation>) {
    match value {
        Value::Object(map) => {
            for (key, child) in map.iter_mut() {
                let child_path = format!("{path}/{key}");
                match child {
                    Value::Array(spans) if key == "evidence" => {
                        for (i, span) in spans.iter_mut().enumerate() {
                            fill_span(text, span, &format!("{child_path}/{i}"), unlocated);
                        }
                    }
                    _ => fill_offsets(text, child, &child_path, unlocated),
                }
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter_mut().enumerate() {
                fill_offsets(text, v, &format!("{path}/{i}"), unlocated);
            }
        }
        _ => {}
    }
}

fn fill_span(text: &str, span: &mut Value, path: &str, unlocated: &mut Vec<Violation>) {
    let Value::Object(map) = span else { return };
    if map.contains_key("start") && map.contains_key("end") {
        return;
    }
    let Some(quote) = map.get("quote").and_then(Value::as_str) else { return };
    match EvidenceSpan::locate(text, quote) {
        Some(found) => {
            map.insert("start".into(), found.start.into());
            map.insert("end".into(), found.end.into());
        }
        None => unlocated.push(Violation::new(
            ViolationKind::NotASubstring,
            path,
            format!("{quote:?} does not occur in the post"),
        )),
    }
}

pub fn load_tasks(path: &Path) -> crate::Result<Vec<AnnotationTask>> {
    crate::jsonl::read(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Population;
    use serde_json::json;

    const TEXT: &str = "My husband has dementia and I barely see anyone now.";

    fn board() -> (TaskBoard, PostId) {
        let id = PostId::from("p1");
        let post = Post::new(id.clone(), "dementia".into(), Population::Caregiver, String::new(), TEXT.into());
        (TaskBoard::new(vec![post], true, "s3cret"), id)
    }

    fn yes() -> Value {
        json!({"relevant": true, "evidence": [{"quote": "My husband has dementia"}]})
    }

    fn no() -> Value {
        json!({"relevant": false})
    }

    #[test]
    fn claim_submit_and_export() {
        let (b, id) = board();
        let t = b.create(TaskKind::Relevance, &id).unwrap();
        assert_eq!(t.task_id, format!("relevance-{id}"));
        assert!(matches!(b.create(TaskKind::Relevance, &id), Err(BoardError::Conflict(_))));

        let tok = b.claim(&t.task_id, "ann1").unwrap();
        assert_eq!(tok, b.claim(&t.task_id, "ann1").unwrap());
        let after = b.submit(&t.task_id, "ann1", &tok, &yes()).unwrap();
        assert_eq!(after.status, TaskStatus::Submitted);
        assert!(matches!(b.submit(&t.task_id, "ann1", &tok, &yes()), Err(BoardError::Conflict(_))));

        let gold = b.export(TaskKind::Relevance).unwrap();
        assert_eq!(gold.len(), 1);
        assert_eq!(b.get(&t.task_id).unwrap().status, TaskStatus::Merged);
        let tok2 = b.claim(&t.task_id, "ann2");
        assert!(matches!(tok2, Err(BoardError::Conflict(_))));
    }

    #[test]
    fn wrong_token_and_unclaimed_are_forbidden() {
        let (b, id) = board();
        let t = b.create(TaskKind::Relevance, &id).unwrap();
        b.claim(&t.task_id, "ann1").unwrap();
        assert!(matches!(b.submit(&t.task_id, "ann1", "nope", &yes()), Err(BoardError::Forbidden(_))));
        assert!(matches!(b.submit(&t.task_id, "ann2", "nope", &yes()), Err(BoardError::Forbidden(_))));
    }

    #[test]
    fn invalid_evidence_is_rejected_with_violations() {
        let (b, id) = board();
        let t = b.create(TaskKind::Relevance, &id).unwrap();
        let tok = b.claim(&t.task_id, "ann1").unwrap();
        let bad = json!({"relevant": true, "evidence": [{"quote": "my wife has cancer"}]});
        match b.submit(&t.task_id, "ann1", &tok, &bad) {
            Err(BoardError::Invalid(v)) => assert_eq!(v[0].kind, ViolationKind::NotASubstring),
            other => panic!("{other:?}"),
        }
        assert_eq!(b.get(&t.task_id).unwrap().status, TaskStatus::Open);
    }

    #[test]
    fn disagreement_needs_adjudication_before_export() {
        let (b, id) = board();
        let t = b.create(TaskKind::Relevance, &id).unwrap();
        let t1 = b.claim(&t.task_id, "ann1").unwrap();
        let t2 = b.claim(&t.task_id, "ann2").unwrap();
        b.submit(&t.task_id, "ann1", &t1, &yes()).unwrap();
        let after = b.submit(&t.task_id, "ann2", &t2, &no()).unwrap();
        assert_eq!(after.status, TaskStatus::Adjudicating);
        assert!(matches!(b.export(TaskKind::Relevance), Err(BoardError::Core(Error::MissingAdjudication(_)))));

        let merged = b.adjudicate(&t.task_id, "lead", "clear caregiver", &yes()).unwrap();
        assert_eq!(merged.status, TaskStatus::Merged);
        let gold = b.export(TaskKind::Relevance).unwrap();
        assert!(matches!(&gold.entries[&id], GoldLabels::Relevance(v) if v.relevant));
        assert!(matches!(b.adjudicate(&t.task_id, "lead", "", &no()), Err(BoardError::Conflict(_))));
    }

    #[test]
    fn agreement_between_two_annotators() {
        let (b, id) = board();
        let t = b.create(TaskKind::Contamination, &id).unwrap();
        let t1 = b.claim(&t.task_id, "a").unwrap();
        let t2 = b.claim(&t.task_id, "b").unwrap();
        b.submit(&t.task_id, "a", &t1, &json!({"caregiver_author": true})).unwrap();
        b.submit(&t.task_id, "b", &t2, &json!({"caregiver_author": true})).unwrap();
        let report = b.agreement(TaskKind::Contamination, "a", "b").unwrap();
        assert_eq!(report.n_overlap, 1);
        assert!(report.mean.is_none());
    }

    #[test]
    fn state_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("board.json");
        let (b, id) = board();
        let b = b.with_state_file(&path).unwrap();
        let t = b.create(TaskKind::Relevance, &id).unwrap();
        b.claim(&t.task_id, "ann1").unwrap();
        let (fresh, _) = board();
        let reloaded = fresh.with_state_file(&path).unwrap();
        assert_eq!(reloaded.get(&t.task_id).unwrap().assignees, vec!["ann1".to_string()]);
    }
}
