//! Run configuration, prompt templates, and stage orchestration over a
//! persisted corpus store.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::causes::{self, CauseSet, Framework};
use crate::corpus::{
    self, Anonymizer, CorpusStore, Population, Post, PostId, QuarantineEntry, RawRecord, SampleSpec, Stage,
    StageStatus, SubredditRegistry,
};
use crate::demographics::{self, BinningScheme, DemographicProfile};
use crate::error::{Error, Result};
use crate::gateway::{
    Annotated, CacheMode, Gateway, MockProvider, MockScript, ModelSpec, OpenAiCompatible, PromptTemplate,
    Provider, RetryPolicy, StageBinding, StageCall, TranscriptCache,
};
use crate::jsonl;
use crate::loneliness::{self, LonelinessAssessment, Scale, DEFAULT_THRESHOLD};
use crate::prefilter::{Prefilter, PrefilterRecord, RuleBook, TokenFilterSpec};
use crate::relevance::{self, RelevanceVerdict};
use crate::reports::{self, ReportBundle};

/// Prompt templates by stage binding.
#[derive(Debug, Clone, PartialEq)]
pub struct Templates {
    by_binding: BTreeMap<StageBinding, PromptTemplate>,
}

const SHIPPED_TEMPLATES: [(StageBinding, &str); 5] = [
    (StageBinding::RelevanceCaregiver, include_str!("../assets/templates/relevance_caregiver.toml")),
    (StageBinding::RelevanceNoncaregiver, include_str!("../assets/templates/relevance_noncaregiver.toml")),
    (StageBinding::LonelinessEval, include_str!("../assets/templates/loneliness_eval.toml")),
    (StageBinding::CauseCategorize, include_str!("../assets/templates/cause_categorize.toml")),
    (StageBinding::Demographics, include_str!("../assets/templates/demographics.toml")),
];

fn required_placeholders(binding: StageBinding) -> &'static [&'static str] {
    match binding {
        StageBinding::RelevanceCaregiver | StageBinding::RelevanceNoncaregiver | StageBinding::Demographics => {
            &["post_text"]
        }
        StageBinding::LonelinessEval => &["post_text", "scale"],
        StageBinding::CauseCategorize => &["framework", "post_text"],
    }
}

impl Templates {
    pub fn shipped() -> Self {
        let by_binding = SHIPPED_TEMPLATES
            .iter()
            .map(|(b, src)| (*b, PromptTemplate::from_toml(src).expect("shipped template is valid")))
            .collect();
        Templates { by_binding }
    }

    /// Shipped templates, overridden by `<dir>/<binding>.toml` where present.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut t = Self::shipped();
        for binding in StageBinding::ALL {
            let path = dir.join(format!("{binding}.toml"));
            if path.exists() {
                t.by_binding.insert(binding, PromptTemplate::load(&path)?);
            }
        }
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for (binding, template) in &self.by_binding {
            let found = template.placeholders();
            let required = required_placeholders(*binding);
            if found.iter().map(String::as_str).ne(required.iter().copied()) {
                return Err(Error::Template(format!(
                    "{}: placeholders {:?}, expected {:?}",
                    template.template_id, found, required
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, binding: StageBinding) -> &PromptTemplate {
        &self.by_binding[&binding]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StageBinding, &PromptTemplate)> {
        self.by_binding.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    #[serde(default = "default_rate")]
    pub rate_limit: usize,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

fn default_rate() -> usize {
    10
}

fn default_in_flight() -> usize {
    8
}

fn default_retries() -> u32 {
    4
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            rate_limit: default_rate(),
            max_in_flight: default_in_flight(),
            max_retries: default_retries(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    /// Restricts sampling to one population; the other passes through whole.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<Population>,
    #[serde(flatten)]
    pub spec: SampleSpec,
}

fn default_true() -> bool {
    true
}

fn default_threshold() -> i32 {
    DEFAULT_THRESHOLD
}

/// Everything a run needs. Relative paths resolve against the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Raw records (JSON Lines) read by the ingest stage.
    pub corpus: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub cache_mode: CacheMode,
    #[serde(default = "default_true")]
    pub include_title: bool,
    #[serde(default = "default_threshold")]
    pub threshold: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registry: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub framework: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binning: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates_dir: Option<PathBuf>,
    /// Use the scripted mock provider instead of a live endpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_script: Option<PathBuf>,
    #[serde(default)]
    pub token_filter: TokenFilterSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<SampleConfig>,
    #[serde(default, rename = "model")]
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub gateway: GatewayConfig,
}

impl RunConfig {
    pub fn minimal(corpus: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            corpus: corpus.into(),
            output_dir: output_dir.into(),
            cache_dir: None,
            cache_mode: CacheMode::default(),
            include_title: true,
            threshold: DEFAULT_THRESHOLD,
            registry: None,
            rules: None,
            scale: None,
            framework: None,
            binning: None,
            templates_dir: None,
            mock_script: None,
            token_filter: TokenFilterSpec::default(),
            sample: None,
            models: Vec::new(),
            gateway: GatewayConfig::default(),
        }
    }

    pub fn from_toml(src: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(src).map_err(|e| Error::parse("run config", e))?;
        config.validate()?;
        Ok(config)
    }

    /// Parses the file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&src)?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus);
        fix(&mut self.output_dir);
        for p in [
            &mut self.cache_dir,
            &mut self.registry,
            &mut self.rules,
            &mut self.scale,
            &mut self.framework,
            &mut self.binning,
            &mut self.templates_dir,
            &mut self.mock_script,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.token_filter.validate()?;
        if !(-15..=15).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} outside [-15, 15]", self.threshold)));
        }
        let mut seen = std::collections::BTreeSet::new();
        for m in &self.models {
            if !seen.insert(m.stage_binding) {
                return Err(Error::Config(format!("model binding {} listed twice", m.stage_binding)));
            }
        }
        if self.gateway.max_in_flight == 0 {
            return Err(Error::Config("gateway.max_in_flight must be positive".into()));
        }
        Ok(())
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.output_dir.join("cache"))
    }

    pub fn store_path(&self) -> PathBuf {
        self.output_dir.join("corpus.jsonl")
    }

    /// SHA-256 over the settings that affect results. Output locations and
    /// the cache mode are excluded so a replay of a recorded run hashes the
    /// same.
    pub fn config_hash(&self) -> String {
        let mut semantic = self.clone();
        semantic.output_dir = PathBuf::new();
        semantic.cache_dir = None;
        semantic.cache_mode = CacheMode::default();
        semantic.corpus = self.corpus.file_name().map(PathBuf::from).unwrap_or_default();
        let strip = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                *path = path.file_name().map(PathBuf::from).unwrap_or_default();
            }
        };
        for p in [
            &mut semantic.registry,
            &mut semantic.rules,
            &mut semantic.scale,
            &mut semantic.framework,
            &mut semantic.binning,
            &mut semantic.templates_dir,
            &mut semantic.mock_script,
        ] {
            strip(p);
        }
        let text = serde_json::to_string(&semantic).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn model(&self, binding: StageBinding) -> ModelSpec {
        self.models
            .iter()
            .find(|m| m.stage_binding == binding)
            .cloned()
            .unwrap_or_else(|| ModelSpec::default_for(binding))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: Stage,
    pub processed: usize,
    pub passed: usize,
    pub rejected: usize,
    pub errored: usize,
    /// Eligible posts that already had a result.
    pub skipped: usize,
}

impl StageSummary {
    fn new(stage: Stage) -> Self {
        StageSummary {
            stage,
            processed: 0,
            passed: 0,
            rejected: 0,
            errored: 0,
            skipped: 0,
        }
    }

    fn count(&mut self, status: StageStatus) {
        self.processed += 1;
        match status {
            StageStatus::Passed => self.passed += 1,
            StageStatus::Rejected => self.rejected += 1,
            StageStatus::Errored => self.errored += 1,
            StageStatus::Pending => {}
        }
    }
}

impl std::fmt::Display for StageSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: processed {} (passed {}, rejected {}, errored {}), skipped {}",
            self.stage, self.processed, self.passed, self.rejected, self.errored, self.skipped
        )
    }
}

enum Output {
    Prefilter(PrefilterRecord),
    Relevance(Annotated<RelevanceVerdict>),
    Loneliness(Annotated<LonelinessAssessment>),
    Causes(Annotated<CauseSet>),
    Demographics(Annotated<DemographicProfile>),
    Nothing,
}

impl Output {
    fn apply(self, post: &mut Post) {
        match self {
            Output::Prefilter(r) => {
                post.token_count = Some(r.token_count);
                post.prefilter = Some(r);
            }
            Output::Relevance(a) => post.relevance = Some(a),
            Output::Loneliness(a) => post.loneliness = Some(a),
            Output::Causes(a) => {
                post.review_flags = causes::review_flags(&a.value, post.population);
                post.causes = Some(a);
            }
            Output::Demographics(a) => post.demographics = Some(a),
            Output::Nothing => {}
        }
    }
}

pub struct Pipeline {
    config: RunConfig,
    store: CorpusStore,
    gateway: Gateway,
    templates: Templates,
    registry: SubredditRegistry,
    prefilter: Prefilter,
    scale: Scale,
    framework: Framework,
    binning: BinningScheme,
}

impl Pipeline {
    /// Builds the provider the config asks for: the mock script when set,
    /// otherwise an OpenAI-compatible endpoint.
    pub fn new(config: RunConfig) -> Result<Self> {
        let provider: Arc<dyn Provider> = match &config.mock_script {
            Some(path) => Arc::new(MockProvider::new(MockScript::load(path)?)?),
            None => Arc::new(OpenAiCompatible::new()?),
        };
        Self::with_provider(config, provider)
    }

    pub fn with_provider(config: RunConfig, provider: Arc<dyn Provider>) -> Result<Self> {
        config.validate()?;
        let registry = match &config.registry {
            Some(p) => SubredditRegistry::load(p)?,
            None => SubredditRegistry::default(),
        };
        let rules = match &config.rules {
            Some(p) => RuleBook::load(p)?,
            None => RuleBook::shipped(),
        };
        let scale = match &config.scale {
            Some(p) => Scale::load(p)?,
            None => Scale::shipped(),
        };
        scale.validate()?;
        let framework = match &config.framework {
            Some(p) => Framework::load(p)?,
            None => Framework::shipped(),
        };
        let binning = match &config.binning {
            Some(p) => BinningScheme::load(p)?,
            None => BinningScheme::shipped(),
        };
        let templates = match &config.templates_dir {
            Some(d) => Templates::load_dir(d)?,
            None => Templates::shipped(),
        };
        let prefilter = Prefilter::new(config.token_filter.clone(), rules)?;
        let gateway = Gateway::new(provider)
            .with_cache(TranscriptCache::new(config.cache_dir()))
            .with_rate_limit(config.gateway.rate_limit)
            .with_max_in_flight(config.gateway.max_in_flight)
            .with_retry(RetryPolicy {
                max_retries: config.gateway.max_retries,
                ..RetryPolicy::default()
            });
        let store_path = config.store_path();
        let store = if store_path.exists() {
            CorpusStore::load(&store_path)?
        } else {
            CorpusStore::new()
        };
        Ok(Pipeline {
            config,
            store,
            gateway,
            templates,
            registry,
            prefilter,
            scale,
            framework,
            binning,
        })
    }

    /// Swaps the gateway, e.g. to inject a mock clock in tests.
    pub fn with_gateway(mut self, gateway: Gateway) -> Self {
        self.gateway = gateway;
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn store(&self) -> &CorpusStore {
        &self.store
    }

    pub fn templates(&self) -> &Templates {
        &self.templates
    }

    pub fn posts(&self) -> Vec<Post> {
        self.store.snapshot()
    }

    pub fn save(&self) -> Result<()> {
        self.store.save(&self.config.store_path())
    }

    /// Ingests raw records, writing rejects to `quarantine.jsonl`. Returns
    /// (inserted, duplicates, quarantined).
    pub fn ingest_records(&self, records: Vec<RawRecord>) -> Result<(usize, usize, usize)> {
        let outcome = corpus::ingest(records, &self.registry, &Anonymizer::reddit());
        let mut inserted = 0;
        let mut duplicates = outcome.duplicates;
        for post in outcome.posts {
            if self.store.insert(post) {
                inserted += 1;
            } else {
                duplicates += 1;
            }
        }
        let quarantine_path = self.config.output_dir.join("quarantine.jsonl");
        let mut quarantined: Vec<QuarantineEntry> = if quarantine_path.exists() {
            jsonl::read(&quarantine_path)?
        } else {
            Vec::new()
        };
        let new_rejects = outcome.quarantined.len();
        for q in outcome.quarantined {
            if !quarantined.contains(&q) {
                quarantined.push(q);
            }
        }
        jsonl::write(&quarantine_path, &quarantined)?;
        self.save()?;
        Ok((inserted, duplicates, new_rejects))
    }

    fn run_ingest(&self) -> Result<StageSummary> {
        let records: Vec<RawRecord> = jsonl::read(&self.config.corpus)?;
        let (inserted, duplicates, quarantined) = self.ingest_records(records)?;
        Ok(StageSummary {
            stage: Stage::Ingest,
            processed: inserted + quarantined,
            passed: inserted,
            rejected: quarantined,
            errored: 0,
            skipped: duplicates,
        })
    }

    fn reset(&self, stage: Stage, only_errored: bool) {
        let mut stages = vec![stage];
        stages.extend(stage.downstream());
        for id in self.store.ids() {
            self.store.update(&id, |p| {
                if only_errored {
                    if p.status(stage) == StageStatus::Errored {
                        p.reset(stage);
                    }
                } else {
                    for s in &stages {
                        p.reset(*s);
                    }
                }
            });
        }
    }

    /// Runs one stage over every eligible post. Posts with a recorded result
    /// are skipped unless `force`, which also clears downstream results.
    /// Errored posts are always retried. A replay cache miss aborts the stage
    /// before anything is written.
    pub fn run_stage(&self, stage: Stage, force: bool) -> Result<StageSummary> {
        if stage == Stage::Ingest {
            return self.run_ingest();
        }
        if let Some(req) = stage.prerequisite() {
            if !self.store.any_result(req) {
                return Err(Error::MissingPrerequisite {
                    stage: stage.to_string(),
                    requires: req.to_string(),
                });
            }
        }
        self.reset(stage, !force);
        let summary = match stage {
            Stage::Sample => self.run_sample()?,
            _ => self.run_per_post(stage)?,
        };
        self.save()?;
        tracing::info!(%summary, "stage finished");
        Ok(summary)
    }

    fn run_sample(&self) -> Result<StageSummary> {
        let cfg = self
            .config
            .sample
            .as_ref()
            .ok_or_else(|| Error::Config("no [sample] section in run config".into()))?;
        let mut summary = StageSummary::new(Stage::Sample);
        let posts = self.store.snapshot();
        let eligible: Vec<Post> = posts
            .into_iter()
            .filter(|p| p.passed(Stage::Ingest) && cfg.population.is_none_or(|pop| p.population == pop))
            .collect();
        if eligible.iter().any(|p| p.has_result(Stage::Sample)) {
            summary.skipped = eligible.len();
            return Ok(summary);
        }
        let chosen: std::collections::BTreeSet<PostId> =
            corpus::sample(&eligible, &cfg.spec)?.into_iter().map(|p| p.post_id).collect();
        for p in &eligible {
            let status = if chosen.contains(&p.post_id) {
                StageStatus::Passed
            } else {
                StageStatus::Rejected
            };
            self.store.record(&p.post_id, Stage::Sample, status, |_| {});
            summary.count(status);
        }
        Ok(summary)
    }

    fn eligible(&self, stage: Stage, post: &Post) -> bool {
        let Some(req) = stage.prerequisite() else { return true };
        if !post.passed(req) || !post.in_sample() {
            return false;
        }
        match stage {
            // Demographic extraction targets caregiver authors only.
            Stage::Demographics => post.population == Population::Caregiver,
            Stage::Gate => post.loneliness.is_some(),
            _ => true,
        }
    }

    fn call(&self, binding: StageBinding, model: &ModelSpec) -> (PromptTemplate, ModelSpec) {
        (self.templates.get(binding).clone(), model.clone())
    }

    fn compute(&self, stage: Stage, post: &Post, models: &BTreeMap<StageBinding, (PromptTemplate, ModelSpec)>) -> Result<(StageStatus, Output)> {
        let include_title = self.config.include_title;
        let call = |binding: StageBinding| {
            let (template, model) = &models[&binding];
            StageCall {
                gateway: &self.gateway,
                template,
                model,
                mode: self.config.cache_mode,
            }
        };
        match stage {
            Stage::Ingest | Stage::Sample => unreachable!("handled separately"),
            Stage::Prefilter => {
                let (record, status) = self.prefilter.apply(post, include_title);
                Ok((status, Output::Prefilter(record)))
            }
            Stage::Relevance => {
                let c = call(relevance::binding_for(post.population));
                let verdict = match post.population {
                    Population::Caregiver => relevance::judge_caregiver_author(&c, post, include_title)?,
                    Population::NonCaregiver => relevance::judge_lonely_first_person(&c, post, include_title)?,
                };
                let status = if verdict.value.keeps_post() {
                    StageStatus::Passed
                } else {
                    StageStatus::Rejected
                };
                Ok((status, Output::Relevance(verdict)))
            }
            Stage::Evaluate => {
                let c = call(StageBinding::LonelinessEval);
                let a = loneliness::evaluate(&c, post, &self.scale, include_title, self.config.threshold)?;
                Ok((StageStatus::Passed, Output::Loneliness(a)))
            }
            Stage::Gate => {
                let a = post
                    .loneliness
                    .as_ref()
                    .ok_or_else(|| Error::Precondition(format!("post {} has no assessment", post.post_id)))?;
                let status = if loneliness::gate(&a.value, self.config.threshold) {
                    StageStatus::Passed
                } else {
                    StageStatus::Rejected
                };
                Ok((status, Output::Nothing))
            }
            Stage::Causes => {
                let c = call(StageBinding::CauseCategorize);
                let set = causes::categorize(&c, post, &self.framework, include_title)?;
                Ok((StageStatus::Passed, Output::Causes(set)))
            }
            Stage::Demographics => {
                let c = call(StageBinding::Demographics);
                let profile = demographics::extract(&c, post, include_title)?;
                Ok((StageStatus::Passed, Output::Demographics(profile)))
            }
        }
    }

    fn run_per_post(&self, stage: Stage) -> Result<StageSummary> {
        let mut summary = StageSummary::new(stage);
        let posts = self.store.snapshot();
        let mut todo = Vec::new();
        for p in posts.into_iter().filter(|p| self.eligible(stage, p)) {
            if p.has_result(stage) {
                summary.skipped += 1;
            } else {
                todo.push(p);
            }
        }
        let models: BTreeMap<StageBinding, (PromptTemplate, ModelSpec)> = StageBinding::ALL
            .iter()
            .map(|b| (*b, self.call(*b, &self.config.model(*b))))
            .collect();
        let results: Vec<(PostId, Result<(StageStatus, Output)>)> = todo
            .par_iter()
            .map(|p| (p.post_id.clone(), self.compute(stage, p, &models)))
            .collect();
        for (_, r) in &results {
            if let Err(Error::CacheMiss { key }) = r {
                return Err(Error::CacheMiss { key: key.clone() });
            }
        }
        for (id, result) in results {
            let status = match result {
                Ok((status, output)) => {
                    self.store.record(&id, stage, status, |p| output.apply(p));
                    status
                }
                Err(e) => {
                    tracing::warn!(post = %id, %stage, error = %e, "post failed");
                    let message = e.to_string();
                    self.store.record(&id, stage, StageStatus::Errored, |p| {
                        p.errors.insert(stage, message);
                    });
                    StageStatus::Errored
                }
            };
            summary.count(status);
        }
        Ok(summary)
    }

    /// Every stage after ingest in order, skipping sampling when the config
    /// has no sample section.
    pub fn run_all(&self, force: bool) -> Result<Vec<StageSummary>> {
        let mut out = Vec::new();
        for stage in Stage::ALL {
            if stage == Stage::Sample && self.config.sample.is_none() {
                continue;
            }
            out.push(self.run_stage(stage, force)?);
        }
        Ok(out)
    }

    pub fn report_bundle(&self) -> Result<ReportBundle> {
        let posts = self.store.snapshot();
        let mut bundle = ReportBundle {
            funnel: Some(reports::funnel(&posts)),
            ..Default::default()
        };
        let final_posts: Vec<&Post> = posts
            .iter()
            .filter(|p| p.in_sample() && p.passed(Stage::Gate))
            .collect();
        for population in [Population::Caregiver, Population::NonCaregiver] {
            let sets: Vec<&CauseSet> = final_posts
                .iter()
                .filter(|p| p.population == population)
                .filter_map(|p| p.causes.as_ref().map(|c| &c.value))
                .collect();
            if !sets.is_empty() {
                bundle.causes.push(reports::cause_distribution(&sets, population)?);
            }
        }
        let profiles: Vec<DemographicProfile> = final_posts
            .iter()
            .filter_map(|p| p.demographics.as_ref().map(|d| d.value.clone()))
            .collect();
        if !profiles.is_empty() {
            let binned: Vec<_> = profiles.iter().map(|p| demographics::bin(p, &self.binning)).collect();
            bundle.demographics = Some(reports::demographic_distribution(&binned, &profiles, &self.binning)?);
        }
        Ok(bundle)
    }

    /// Writes reports under `<output_dir>/reports` and `manifest.json`.
    /// Nothing time-dependent is written, so identical runs produce
    /// identical bytes.
    pub fn report(&self) -> Result<Vec<PathBuf>> {
        let dir = self.config.output_dir.join("reports");
        let mut written = self.report_bundle()?.write(&dir)?;
        let manifest = self.manifest(&written);
        let path = self.config.output_dir.join("manifest.json");
        jsonl::write_json(&path, &manifest)?;
        written.push(path);
        Ok(written)
    }

    pub fn manifest(&self, reports: &[PathBuf]) -> serde_json::Value {
        let posts = self.store.snapshot();
        let mut stages = serde_json::Map::new();
        for stage in Stage::ALL {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for p in &posts {
                let key = match p.status(stage) {
                    StageStatus::Pending => continue,
                    StageStatus::Passed => "passed",
                    StageStatus::Rejected => "rejected",
                    StageStatus::Errored => "errored",
                };
                *counts.entry(key).or_default() += 1;
            }
            stages.insert(stage.to_string(), json!(counts));
        }
        let templates: Vec<_> = self
            .templates
            .iter()
            .map(|(b, t)| json!({"binding": b, "template_id": t.template_id, "version": t.version}))
            .collect();
        let models: Vec<_> = StageBinding::ALL
            .iter()
            .map(|b| {
                let m = self.config.model(*b);
                json!({"binding": b, "model_name": m.model_name, "temperature": m.temperature})
            })
            .collect();
        let base = &self.config.output_dir;
        let reports: Vec<String> = reports
            .iter()
            .map(|p| p.strip_prefix(base).unwrap_or(p).to_string_lossy().replace('\\', "/"))
            .collect();
        json!({
            "tool_version": env!("CARGO_PKG_VERSION"),
            "config_hash": self.config.config_hash(),
            "posts": posts.len(),
            "stages": stages,
            "templates": templates,
            "models": models,
            "reports": reports,
        })
    }
}
