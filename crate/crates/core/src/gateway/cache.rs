//! Content-addressed transcript cache: one JSON document per request key.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::provider::ChatMessage;
use crate::error::{Error, Result};
use crate::jsonl;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub key: String,
    pub template_id: String,
    pub version: String,
    pub model_name: String,
    pub request: Vec<ChatMessage>,
    pub raw_response: String,
    pub parsed: Value,
    pub retry_count: u32,
    pub started_at_ms: u128,
    pub finished_at_ms: u128,
}

/// SHA-256 over the length-prefixed key fields; distinct rendered prompts
/// give distinct keys.
pub fn transcript_key(template_id: &str, version: &str, model_name: &str, system: &str, user: &str) -> String {
    let mut hasher = Sha256::new();
    for part in [template_id, version, model_name, system, user] {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone)]
pub struct TranscriptCache {
    dir: PathBuf,
}

impl TranscriptCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        TranscriptCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        let shard = key.get(..2).unwrap_or("xx");
        self.dir.join(shard).join(format!("{key}.json"))
    }

    pub fn load(&self, key: &str) -> Result<Option<Transcript>> {
        let path = self.path_for(key);
        match fs::read_to_string(&path) {
            Ok(src) => serde_json::from_str(&src)
                .map(Some)
                .map_err(|e| Error::parse(path.display().to_string(), e)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    pub fn store(&self, transcript: &Transcript) -> Result<()> {
        jsonl::write_json(&self.path_for(&transcript.key), transcript)
    }

    pub fn len(&self) -> usize {
        fs::read_dir(&self.dir)
            .map(|shards| {
                shards
                    .filter_map(|e| e.ok())
                    .filter_map(|e| fs::read_dir(e.path()).ok())
                    .map(|files| files.count())
                    .sum()
            })
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_separate_fields() {
        let a = transcript_key("t", "1", "m", "ab", "c");
        let b = transcript_key("t", "1", "m", "a", "bc");
        assert_ne!(a, b);
        assert_eq!(a, transcript_key("t", "1", "m", "ab", "c"));
        assert_ne!(a, transcript_key("t", "2", "m", "ab", "c"));
    }

    #[test]
    fn store_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TranscriptCache::new(dir.path());
        let key = transcript_key("t", "1", "m", "s", "u");
        assert!(cache.load(&key).unwrap().is_none());
        let t = Transcript {
            key: key.clone(),
            template_id: "t".into(),
            version: "1".into(),
            model_name: "m".into(),
            request: vec![ChatMessage::user("u")],
            raw_response: "{}".into(),
            parsed: serde_json::json!({}),
            retry_count: 0,
            started_at_ms: 1,
            finished_at_ms: 2,
        };
        cache.store(&t).unwrap();
        assert_eq!(cache.load(&key).unwrap(), Some(t));
        assert_eq!(cache.len(), 1);
    }
}
