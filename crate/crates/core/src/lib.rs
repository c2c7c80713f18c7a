//! Building blocks for population-specific loneliness corpora.
//!
//! Posts flow through a fixed sequence of stages: ingest, optional sampling,
//! cheap deterministic prefilters, LLM relevance screens, the 15-item
//! loneliness evaluation, the score gate, and finally cause categorization and
//! demographic extraction. Every LLM-backed stage goes through [`gateway`],
//! which validates structured responses and can replay recorded transcripts
//! so a full run is reproducible offline.
//!
//! The [`harness`] module holds the agreement and accuracy math used to check
//! each stage against human gold files, and [`service`] exposes the annotation
//! HTTP API that produces those gold files.

pub mod annotation;
pub mod causes;
pub mod corpus;
pub mod demographics;
pub mod error;
pub mod evidence;
pub mod gateway;
pub mod harness;
pub mod jsonl;
pub mod loneliness;
pub mod pipeline;
pub mod prefilter;
pub mod relevance;
pub mod reports;
pub mod service;

pub use causes::{Cause, CauseSet, CauseType};
pub use corpus::{Population, Post, PostId, Stage, StageStatus, SubredditRegistry};
pub use demographics::{Attribute, DemographicProfile, Field};
pub use error::{Error, Result};
pub use evidence::{EvidenceSpan, Violation, ViolationKind};
pub use gateway::{Gateway, ModelSpec, PromptTemplate, StageBinding};
pub use harness::{ConfusionMatrix, GoldFile, GoldLabels, KappaValue, Prf, Task};
pub use loneliness::{ItemJudgment, ItemLabel, LonelinessAssessment, ScaleItem};
pub use pipeline::{Pipeline, RunConfig, StageSummary};
pub use relevance::RelevanceVerdict;
