use tiktoken_rs::CoreBPE;

use crate::error::{Error, Result};

/// BPE token counter bound to one vocabulary.
#[derive(Clone)]
pub struct TokenCounter {
    vocabulary_id: String,
    bpe: &'static CoreBPE,
}

impl std::fmt::Debug for TokenCounter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TokenCounter")
            .field("vocabulary_id", &self.vocabulary_id)
            .finish()
    }
}

impl TokenCounter {
    pub fn new(vocabulary_id: &str) -> Result<Self> {
        let bpe = match vocabulary_id {
            "cl100k_base" => tiktoken_rs::cl100k_base_singleton(),
            "o200k_base" => tiktoken_rs::o200k_base_singleton(),
            "p50k_base" => tiktoken_rs::p50k_base_singleton(),
            "r50k_base" => tiktoken_rs::r50k_base_singleton(),
            other => return Err(Error::UnknownVocabulary(other.to_string())),
        };
        Ok(TokenCounter {
            vocabulary_id: vocabulary_id.to_string(),
            bpe,
        })
    }

    pub fn vocabulary_id(&self) -> &str {
        &self.vocabulary_id
    }

    /// Special-token strings in the text count as ordinary text.
    pub fn count(&self, text: &str) -> usize {
        self.bpe.encode_ordinary(text).len()
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        self.bpe.encode_ordinary(text).into_iter().collect()
    }
}
