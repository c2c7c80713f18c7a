use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Post;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum SampleStrategy {
    All,
    /// Draws `round(fraction * n_c)` posts from every community.
    PerCommunityFraction { fraction: f64 },
    /// Splits `target` across communities in proportion to their size
    /// (largest-remainder rounding), then draws uniformly within each.
    TotalTarget { target: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    #[serde(flatten)]
    pub strategy: SampleStrategy,
    #[serde(default)]
    pub rng_seed: u64,
}

impl SampleSpec {
    pub fn validate(&self, population: usize) -> Result<()> {
        match self.strategy {
            SampleStrategy::All => Ok(()),
            SampleStrategy::PerCommunityFraction { fraction } => {
                if fraction > 0.0 && fraction <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidSample(format!(
                        "fraction {fraction} outside (0, 1]"
                    )))
                }
            }
            SampleStrategy::TotalTarget { target } => {
                if target <= population {
                    Ok(())
                } else {
                    Err(Error::InvalidSample(format!(
                        "target {target} exceeds population of {population}"
                    )))
                }
            }
        }
    }
}

/// Draws a reproducible stratified sample. The result is sorted by post id.
pub fn sample(posts: &[Post], spec: &SampleSpec) -> Result<Vec<Post>> {
    if posts.is_empty() {
        return Ok(Vec::new());
    }
    spec.validate(posts.len())?;

    let mut by_community: BTreeMap<&str, Vec<&Post>> = BTreeMap::new();
    for post in posts {
        by_community.entry(&post.community).or_default().push(post);
    }
    for group in by_community.values_mut() {
        group.sort_by(|a, b| a.post_id.cmp(&b.post_id));
    }

    let quotas: BTreeMap<&str, usize> = match spec.strategy {
        SampleStrategy::All => by_community.iter().map(|(c, g)| (*c, g.len())).collect(),
        SampleStrategy::PerCommunityFraction { fraction } => by_community
            .iter()
            .map(|(c, g)| (*c, ((fraction * g.len() as f64).round() as usize).min(g.len())))
            .collect(),
        SampleStrategy::TotalTarget { target } => {
            let sizes: Vec<(&str, usize)> = by_community.iter().map(|(c, g)| (*c, g.len())).collect();
            proportional_allocation(&sizes, target).into_iter().collect()
        }
    };

    let mut out = Vec::new();
    for (community, group) in &by_community {
        let k = quotas[community];
        if k == group.len() {
            out.extend(group.iter().map(|p| (*p).clone()));
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(community_seed(spec.rng_seed, community));
        for i in index::sample(&mut rng, group.len(), k) {
            out.push(group[i].clone());
        }
    }
    out.sort_by(|a, b| a.post_id.cmp(&b.post_id));
    Ok(out)
}

/// Hamilton apportionment: floors of the exact shares, then the leftover
/// seats go to the largest fractional parts (ties broken by input order).
pub fn proportional_allocation<'a>(sizes: &[(&'a str, usize)], target: usize) -> Vec<(&'a str, usize)> {
    let total: usize = sizes.iter().map(|(_, n)| n).sum();
    if total == 0 {
        return sizes.iter().map(|(c, _)| (*c, 0)).collect();
    }
    let mut alloc: Vec<(&str, usize, u128)> = sizes
        .iter()
        .map(|(c, n)| {
            let exact = target as u128 * *n as u128;
            let floor = (exact / total as u128) as usize;
            let remainder = exact % total as u128;
            (*c, floor, remainder)
        })
        .collect();
    let assigned: usize = alloc.iter().map(|(_, f, _)| f).sum();
    let mut order: Vec<usize> = (0..alloc.len()).collect();
    order.sort_by(|&a, &b| alloc[b].2.cmp(&alloc[a].2).then(a.cmp(&b)));
    for &i in order.iter().take(target - assigned) {
        alloc[i].1 += 1;
    }
    alloc.into_iter().map(|(c, n, _)| (c, n)).collect()
}

fn community_seed(seed: u64, community: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(community.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}
