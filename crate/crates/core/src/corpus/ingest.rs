use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{Anonymizer, Post, PostId, Stage, StageStatus, SubredditRegistry};

/// A record as delivered by a forum client or an offline dump. Everything in
/// `metadata` is dropped at ingest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub community: String,
    pub platform_id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub body: String,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub metadata: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarantineEntry {
    pub community: String,
    pub platform_id: String,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct IngestOutcome {
    pub posts: Vec<Post>,
    pub duplicates: usize,
    pub quarantined: Vec<QuarantineEntry>,
}

/// Resolves, anonymizes and deduplicates raw records. Posts come back with
/// `ingest` marked passed and sorted by post id.
pub fn ingest<I>(records: I, registry: &SubredditRegistry, anonymizer: &Anonymizer) -> IngestOutcome
where
    I: IntoIterator<Item = RawRecord>,
{
    let mut outcome = IngestOutcome::default();
    let mut seen: HashSet<PostId> = HashSet::new();
    for record in records {
        let Some(entry) = registry.resolve(&record.community) else {
            outcome.quarantined.push(QuarantineEntry {
                community: record.community,
                platform_id: record.platform_id,
                reason: "community not in registry".into(),
            });
            continue;
        };
        let id = PostId::derive(&entry.community, &record.platform_id);
        if !seen.insert(id.clone()) {
            outcome.duplicates += 1;
            continue;
        }
        let body = anonymizer.strip(record.body.trim());
        if body.trim().is_empty() {
            outcome.quarantined.push(QuarantineEntry {
                community: entry.community.clone(),
                platform_id: record.platform_id,
                reason: "empty body".into(),
            });
            continue;
        }
        let title = anonymizer.strip(record.title.trim());
        let mut post = Post::new(id, entry.community.clone(), entry.population, title, body);
        post.record(Stage::Ingest, StageStatus::Passed);
        outcome.posts.push(post);
    }
    outcome.posts.sort_by(|a, b| a.post_id.cmp(&b.post_id));
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CorpusStore, Population};
    use proptest::prelude::*;

    fn record(community: &str, id: &str, body: &str) -> RawRecord {
        RawRecord {
            community: community.into(),
            platform_id: id.into(),
            title: "t".into(),
            body: body.into(),
            metadata: serde_json::json!({"author": "someone", "score": 12}),
        }
    }

    #[test]
    fn duplicate_records_collapse() {
        let out = ingest(
            vec![record("dementia", "a1", "x"), record("dementia", "a1", "y")],
            &SubredditRegistry::default(),
            &Anonymizer::reddit(),
        );
        assert_eq!(out.posts.len(), 1);
        assert_eq!(out.duplicates, 1);
    }

    #[test]
    fn population_comes_from_registry() {
        let out = ingest(
            vec![record("CaregiverSupport", "1", "hello"), record("r/lonely", "2", "hi")],
            &SubredditRegistry::default(),
            &Anonymizer::reddit(),
        );
        let pops: Vec<_> = out.posts.iter().map(|p| (p.community.as_str(), p.population)).collect();
        assert!(pops.contains(&("CaregiverSupport", Population::Caregiver)));
        assert!(pops.contains(&("lonely", Population::NonCaregiver)));
    }

    #[test]
    fn mentions_are_redacted_and_metadata_dropped() {
        let out = ingest(
            vec![record("caregivers", "1", "thanks u/someuser for the tip")],
            &SubredditRegistry::default(),
            &Anonymizer::reddit(),
        );
        let post = &out.posts[0];
        assert_eq!(post.body, "thanks [user] for the tip");
        let json = serde_json::to_string(post).unwrap();
        assert!(!json.contains("someone"));
        assert!(!json.contains("score"));
    }

    #[test]
    fn unknown_community_and_empty_body_are_quarantined() {
        let out = ingest(
            vec![record("rust", "1", "text"), record("alone", "2", "   ")],
            &SubredditRegistry::default(),
            &Anonymizer::reddit(),
        );
        assert!(out.posts.is_empty());
        let reasons: Vec<_> = out.quarantined.iter().map(|q| q.reason.as_str()).collect();
        assert_eq!(reasons, ["community not in registry", "empty body"]);
    }

    proptest! {
        #[test]
        fn ingesting_twice_changes_nothing(
            ids in proptest::collection::vec((0usize..3, 0u8..20), 0..40)
        ) {
            let communities = ["alone", "dementia", "caregivers"];
            let records: Vec<_> = ids
                .iter()
                .map(|(c, i)| record(communities[*c], &i.to_string(), "some body text"))
                .collect();
            let registry = SubredditRegistry::default();
            let anonymizer = Anonymizer::reddit();
            let store = CorpusStore::new();
            for p in ingest(records.clone(), &registry, &anonymizer).posts {
                store.insert(p);
            }
            let once = store.snapshot();
            for p in ingest(records, &registry, &anonymizer).posts {
                store.insert(p);
            }
            prop_assert_eq!(once, store.snapshot());
        }
    }
}
