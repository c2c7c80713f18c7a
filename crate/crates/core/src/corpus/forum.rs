//! Live ingest from the forum's public listing API.

use serde_json::Value;

use super::RawRecord;
use crate::error::{Error, Result};
use crate::gateway::http;

pub struct ForumClient {
    client: reqwest::blocking::Client,
    base_url: String,
    token: String,
    page_size: usize,
}

impl ForumClient {
    pub fn new(base_url: impl Into<String>, token: impl Into<String>) -> Result<Self> {
        Ok(ForumClient {
            client: http::blocking_client()?,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            token: token.into(),
            page_size: 100,
        })
    }

    /// Reads the OAuth2 bearer token from `token_env`.
    pub fn from_env(base_url: impl Into<String>, token_env: &str) -> Result<Self> {
        let token = std::env::var(token_env)
            .map_err(|_| Error::Config(format!("environment variable {token_env} is not set")))?;
        Self::new(base_url, token)
    }

    /// Pages through `/r/{community}/new` until `limit` records or the end of
    /// the listing.
    pub fn fetch_new(&self, community: &str, limit: usize) -> Result<Vec<RawRecord>> {
        let mut out = Vec::new();
        let mut after: Option<String> = None;
        while out.len() < limit {
            let mut url = format!(
                "{}/r/{}/new?limit={}&raw_json=1",
                self.base_url,
                community,
                self.page_size.min(limit - out.len())
            );
            if let Some(cursor) = &after {
                url.push_str("&after=");
                url.push_str(cursor);
            }
            let resp = self
                .client
                .get(&url)
                .bearer_auth(&self.token)
                .send()
                .map_err(|e| Error::Http(e.to_string()))?;
            let status = resp.status();
            if !status.is_success() {
                return Err(Error::Http(format!("{url} returned {status}")));
            }
            let body: Value = resp.json().map_err(|e| Error::Http(e.to_string()))?;
            let (records, next) = parse_listing(&body);
            if records.is_empty() {
                break;
            }
            out.extend(records);
            match next {
                Some(n) => after = Some(n),
                None => break,
            }
        }
        out.truncate(limit);
        Ok(out)
    }
}

/// Extracts self-post records and the pagination cursor from a listing.
pub fn parse_listing(listing: &Value) -> (Vec<RawRecord>, Option<String>) {
    let data = &listing["data"];
    let after = data["after"].as_str().map(str::to_string);
    let records = data["children"]
        .as_array()
        .map(|children| {
            children
                .iter()
                .filter_map(|child| {
                    let d = &child["data"];
                    Some(RawRecord {
                        community: d["subreddit"].as_str()?.to_string(),
                        platform_id: d["id"].as_str()?.to_string(),
                        title: d["title"].as_str().unwrap_or_default().to_string(),
                        body: d["selftext"].as_str().unwrap_or_default().to_string(),
                        metadata: d.clone(),
                    })
                })
                .collect()
        })
        .unwrap_or_default();
    (records, after)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_listing_children() {
        let listing = serde_json::json!({
            "kind": "Listing",
            "data": {
                "after": "t3_b",
                "children": [
                    {"kind": "t3", "data": {"id": "a", "subreddit": "caregivers", "title": "T", "selftext": "B", "author": "x"}},
                    {"kind": "t3", "data": {"subreddit": "caregivers"}}
                ]
            }
        });
        let (records, after) = parse_listing(&listing);
        assert_eq!(after.as_deref(), Some("t3_b"));
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].platform_id, "a");
        assert_eq!(records[0].body, "B");
    }
}
