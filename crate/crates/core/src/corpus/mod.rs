//! Post records, the community registry, and the in-memory corpus store.

mod anonymize;
mod audit;
pub mod forum;
mod ingest;
mod sample;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use anonymize::{Anonymizer, REDACTED_USER};
pub use audit::contamination_audit;
pub use ingest::{ingest, IngestOutcome, QuarantineEntry, RawRecord};
pub use sample::{sample, SampleSpec, SampleStrategy};

use crate::causes::CauseSet;
use crate::demographics::DemographicProfile;
use crate::error::{Error, Result};
use crate::gateway::Annotated;
use crate::jsonl;
use crate::loneliness::LonelinessAssessment;
use crate::prefilter::PrefilterRecord;
use crate::relevance::RelevanceVerdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    Caregiver,
    NonCaregiver,
}

impl Population {
    pub fn as_str(&self) -> &'static str {
        match self {
            Population::Caregiver => "caregiver",
            Population::NonCaregiver => "non_caregiver",
        }
    }
}

impl fmt::Display for Population {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Stable, non-reversible post identifier: the first 16 hex characters of
/// SHA-256 over the canonical community name and the platform id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PostId(pub String);

impl PostId {
    pub fn derive(community: &str, platform_id: &str) -> PostId {
        let mut hasher = Sha256::new();
        hasher.update(community.as_bytes());
        hasher.update([0x1f]);
        hasher.update(platform_id.as_bytes());
        let digest = hasher.finalize();
        PostId(hex::encode(&digest[..8]))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PostId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PostId {
    fn from(s: &str) -> Self {
        PostId(s.to_string())
    }
}

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Sample,
    Prefilter,
    Relevance,
    Evaluate,
    Gate,
    Causes,
    Demographics,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Sample,
        Stage::Prefilter,
        Stage::Relevance,
        Stage::Evaluate,
        Stage::Gate,
        Stage::Causes,
        Stage::Demographics,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Sample => "sample",
            Stage::Prefilter => "prefilter",
            Stage::Relevance => "relevance",
            Stage::Evaluate => "evaluate",
            Stage::Gate => "gate",
            Stage::Causes => "causes",
            Stage::Demographics => "demographics",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.as_str() == s)
    }

    /// The stage whose `passed` status makes a post eligible for this one.
    /// Sampling is optional and handled separately.
    pub fn prerequisite(&self) -> Option<Stage> {
        match self {
            Stage::Ingest => None,
            Stage::Sample | Stage::Prefilter => Some(Stage::Ingest),
            Stage::Relevance => Some(Stage::Prefilter),
            Stage::Evaluate => Some(Stage::Relevance),
            Stage::Gate => Some(Stage::Evaluate),
            Stage::Causes | Stage::Demographics => Some(Stage::Gate),
        }
    }

    /// Stages that consume this stage's output, directly or transitively.
    pub fn downstream(&self) -> Vec<Stage> {
        Stage::ALL
            .into_iter()
            .filter(|s| {
                let mut cur = s.prerequisite();
                while let Some(p) = cur {
                    if p == *self {
                        return true;
                    }
                    cur = p.prerequisite();
                }
                // sampling gates everything after ingest
                *self == Stage::Sample && *s > Stage::Sample
            })
            .collect()
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Pending,
    Passed,
    Rejected,
    Errored,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub community: String,
    pub population: Population,
}

/// The communities a corpus draws from, each tagged with its population.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubredditRegistry {
    #[serde(rename = "community")]
    pub entries: Vec<RegistryEntry>,
}

const DEFAULT_CAREGIVER: [&str; 8] = [
    "AgingParents",
    "cancer",
    "CancerCaregivers",
    "caregivers",
    "caregiversofreddit",
    "CaregiverSupport",
    "dementia",
    "DementiaHelp",
];

const DEFAULT_NON_CAREGIVER: [&str; 7] = [
    "alone",
    "ForeverAlone",
    "loneliness",
    "lonely",
    "lonelywomen",
    "mentalhealth",
    "offmychest",
];

impl Default for SubredditRegistry {
    fn default() -> Self {
        let entries = DEFAULT_CAREGIVER
            .iter()
            .map(|c| (c, Population::Caregiver))
            .chain(DEFAULT_NON_CAREGIVER.iter().map(|c| (c, Population::NonCaregiver)))
            .map(|(c, population)| RegistryEntry {
                community: c.to_string(),
                population,
            })
            .collect();
        SubredditRegistry { entries }
    }
}

impl SubredditRegistry {
    pub fn new(entries: Vec<RegistryEntry>) -> Result<Self> {
        let registry = SubredditRegistry { entries };
        registry.validate()?;
        Ok(registry)
    }

    pub fn from_toml(src: &str) -> Result<Self> {
        let registry: SubredditRegistry =
            toml::from_str(src).map_err(|e| Error::parse("registry", e))?;
        registry.validate()?;
        Ok(registry)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&src)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for entry in &self.entries {
            let key = normalize_community(&entry.community);
            if key.is_empty() {
                return Err(Error::Config("empty community name in registry".into()));
            }
            if !seen.insert(key) {
                return Err(Error::Config(format!(
                    "community `{}` listed twice in registry",
                    entry.community
                )));
            }
        }
        Ok(())
    }

    /// Case-insensitive lookup; an `r/` or `/r/` prefix is ignored.
    pub fn resolve(&self, community: &str) -> Option<&RegistryEntry> {
        let key = normalize_community(community);
        self.entries
            .iter()
            .find(|e| normalize_community(&e.community) == key)
    }

    pub fn communities(&self, population: Population) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .filter(move |e| e.population == population)
            .map(|e| e.community.as_str())
    }
}

pub(crate) fn normalize_community(name: &str) -> String {
    let trimmed = name.trim();
    let trimmed = trimmed.strip_prefix('/').unwrap_or(trimmed);
    let trimmed = trimmed
        .strip_prefix("r/")
        .or_else(|| trimmed.strip_prefix("R/"))
        .unwrap_or(trimmed);
    trimmed.to_lowercase()
}

/// One anonymized post plus everything the pipeline has learned about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub post_id: PostId,
    pub community: String,
    pub population: Population,
    pub title: String,
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_count: Option<usize>,
    #[serde(default)]
    pub stage_status: BTreeMap<Stage, StageStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefilter: Option<PrefilterRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance: Option<Annotated<RelevanceVerdict>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loneliness: Option<Annotated<LonelinessAssessment>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub causes: Option<Annotated<CauseSet>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demographics: Option<Annotated<DemographicProfile>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub errors: BTreeMap<Stage, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub review_flags: Vec<String>,
}

impl Post {
    pub fn new(
        post_id: PostId,
        community: String,
        population: Population,
        title: String,
        body: String,
    ) -> Post {
        Post {
            post_id,
            community,
            population,
            title,
            body,
            token_count: None,
            stage_status: BTreeMap::new(),
            prefilter: None,
            relevance: None,
            loneliness: None,
            causes: None,
            demographics: None,
            errors: BTreeMap::new(),
            review_flags: Vec::new(),
        }
    }

    /// Text every downstream stage analyzes and every evidence span indexes.
    pub fn analysis_text(&self, include_title: bool) -> String {
        let title = self.title.trim();
        if include_title && !title.is_empty() {
            format!("{title}\n\n{}", self.body)
        } else {
            self.body.clone()
        }
    }

    pub fn status(&self, stage: Stage) -> StageStatus {
        self.stage_status
            .get(&stage)
            .copied()
            .unwrap_or(StageStatus::Pending)
    }

    pub fn has_result(&self, stage: Stage) -> bool {
        self.status(stage) != StageStatus::Pending
    }

    pub fn passed(&self, stage: Stage) -> bool {
        self.status(stage) == StageStatus::Passed
    }

    /// False when a sampling run left this post out.
    pub fn in_sample(&self) -> bool {
        self.status(Stage::Sample) != StageStatus::Rejected
    }

    /// Writes a stage result once. Returns `false` and leaves the post
    /// untouched when a result is already recorded.
    pub fn record(&mut self, stage: Stage, status: StageStatus) -> bool {
        if self.has_result(stage) {
            return false;
        }
        self.stage_status.insert(stage, status);
        true
    }

    /// Drops the stage's result (and outputs) so it can be recomputed.
    pub fn reset(&mut self, stage: Stage) {
        self.stage_status.remove(&stage);
        self.errors.remove(&stage);
        match stage {
            Stage::Ingest | Stage::Sample | Stage::Gate => {}
            Stage::Prefilter => {
                self.prefilter = None;
                self.token_count = None;
            }
            Stage::Relevance => self.relevance = None,
            Stage::Evaluate => self.loneliness = None,
            Stage::Causes => {
                self.causes = None;
                self.review_flags.clear();
            }
            Stage::Demographics => self.demographics = None,
        }
    }
}

/// Thread-safe post store keyed by post id. Stage results are first-write
/// wins; iteration is always in post id order.
#[derive(Debug, Default)]
pub struct CorpusStore {
    posts: RwLock<BTreeMap<PostId, Post>>,
}

impl CorpusStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_posts(posts: impl IntoIterator<Item = Post>) -> Self {
        let store = Self::new();
        {
            let mut map = store.posts.write().unwrap();
            for post in posts {
                map.entry(post.post_id.clone()).or_insert(post);
            }
        }
        store
    }

    pub fn load(path: &Path) -> Result<Self> {
        let posts: Vec<Post> = jsonl::read(path)?;
        Ok(Self::from_posts(posts))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        jsonl::write(path, &self.snapshot())
    }

    pub fn len(&self) -> usize {
        self.posts.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inserts a post unless its id is already present. Returns whether it
    /// was inserted.
    pub fn insert(&self, post: Post) -> bool {
        let mut map = self.posts.write().unwrap();
        if map.contains_key(&post.post_id) {
            return false;
        }
        map.insert(post.post_id.clone(), post);
        true
    }

    pub fn get(&self, id: &PostId) -> Option<Post> {
        self.posts.read().unwrap().get(id).cloned()
    }

    pub fn snapshot(&self) -> Vec<Post> {
        self.posts.read().unwrap().values().cloned().collect()
    }

    pub fn ids(&self) -> Vec<PostId> {
        self.posts.read().unwrap().keys().cloned().collect()
    }

    /// Applies `f` to the post and records `status` for `stage`, unless a
    /// result already exists. Returns whether the write happened.
    pub fn record<F>(&self, id: &PostId, stage: Stage, status: StageStatus, f: F) -> bool
    where
        F: FnOnce(&mut Post),
    {
        let mut map = self.posts.write().unwrap();
        match map.get_mut(id) {
            Some(post) if !post.has_result(stage) => {
                f(post);
                post.record(stage, status)
            }
            _ => false,
        }
    }

    pub fn update<F: FnOnce(&mut Post)>(&self, id: &PostId, f: F) {
        if let Some(post) = self.posts.write().unwrap().get_mut(id) {
            f(post);
        }
    }

    pub fn any_result(&self, stage: Stage) -> bool {
        self.posts
            .read()
            .unwrap()
            .values()
            .any(|p| p.has_result(stage))
    }
}
