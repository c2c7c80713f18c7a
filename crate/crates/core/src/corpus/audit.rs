use super::sample::{sample, SampleSpec, SampleStrategy};
use super::Post;
use crate::annotation::{AnnotationTask, TaskKind};
use crate::error::{Error, Result};

/// Draws `n` posts uniformly (seeded) and exports them as unlabeled
/// contamination tasks for the annotation service.
pub fn contamination_audit(
    posts: &[Post],
    n: usize,
    rng_seed: u64,
    include_title: bool,
) -> Result<Vec<AnnotationTask>> {
    if n > posts.len() {
        return Err(Error::NotEnoughPosts {
            requested: n,
            available: posts.len(),
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    // Pool everything into one stratum so the draw is uniform over posts.
    let pooled: Vec<Post> = posts
        .iter()
        .map(|p| {
            let mut p = p.clone();
            p.community = String::new();
            p
        })
        .collect();
    let spec = SampleSpec {
        strategy: SampleStrategy::TotalTarget { target: n },
        rng_seed,
    };
    let chosen = sample(&pooled, &spec)?;
    let by_id: std::collections::HashMap<_, _> = posts.iter().map(|p| (&p.post_id, p)).collect();
    Ok(chosen
        .iter()
        .map(|p| AnnotationTask::new(TaskKind::Contamination, by_id[&p.post_id], include_title))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Population, PostId};

    fn corpus(n: usize) -> Vec<Post> {
        (0..n)
            .map(|i| {
                Post::new(
                    PostId::derive("alone", &i.to_string()),
                    if i % 2 == 0 { "alone" } else { "lonely" }.into(),
                    Population::NonCaregiver,
                    String::new(),
                    format!("post {i}"),
                )
            })
            .collect()
    }

    #[test]
    fn sheet_has_requested_size_and_empty_labels() {
        let sheet = contamination_audit(&corpus(500), 202, 11, true).unwrap();
        assert_eq!(sheet.len(), 202);
        assert!(sheet.iter().all(|t| t.label.is_none() && t.kind == TaskKind::Contamination));
    }

    #[test]
    fn zero_rows_and_oversized_requests() {
        assert!(contamination_audit(&corpus(3), 0, 1, true).unwrap().is_empty());
        match contamination_audit(&corpus(3), 4, 1, true) {
            Err(Error::NotEnoughPosts { requested: 4, available: 3 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn same_seed_same_sheet() {
        let posts = corpus(300);
        let a = contamination_audit(&posts, 50, 5, true).unwrap();
        let b = contamination_audit(&posts, 50, 5, true).unwrap();
        assert_eq!(a, b);
    }
}
