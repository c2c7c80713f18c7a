use std::path::PathBuf;

use thiserror::Error;

use crate::evidence::Violation;
use crate::gateway::ProviderError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {what}: {message}")]
    Parse { what: String, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown BPE vocabulary `{0}`")]
    UnknownVocabulary(String),

    #[error("invalid regex `{pattern}`: {message}")]
    Regex { pattern: String, message: String },

    #[error("invalid sample spec: {0}")]
    InvalidSample(String),

    #[error("requested {requested} posts but only {available} are available")]
    NotEnoughPosts { requested: usize, available: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("template error: {0}")]
    Template(String),

    #[error("replay cache miss for key {key}")]
    CacheMiss { key: String },

    #[error("provider error: {0}")]
    Provider(#[from] ProviderError),

    #[error("response failed validation after repair: {}", join_violations(.violations))]
    InvalidResponse { violations: Vec<Violation> },

    #[error("invalid judgments: {0}")]
    Judgments(String),

    #[error("post id sets differ: {missing_in_pred} missing from predictions, {missing_in_gold} missing from gold (first: {example})")]
    PostIdMismatch {
        missing_in_pred: usize,
        missing_in_gold: usize,
        example: String,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("gold files do not overlap")]
    NoOverlap,

    #[error("gold files are for different tasks: {0} vs {1}")]
    TaskMismatch(String, String),

    #[error("missing adjudication for posts: {}", .0.join(", "))]
    MissingAdjudication(Vec<String>),

    #[error("stage `{stage}` requires `{requires}` to have run first")]
    MissingPrerequisite { stage: String, requires: String },

    #[error("http error: {0}")]
    Http(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(what: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            what: what.into(),
            message: message.to_string(),
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
