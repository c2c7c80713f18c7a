//! Deterministic inputs shared by the benchmarks.

use lonecorp_core::loneliness::{ItemJudgment, ItemLabel};

/// 15 judgments cycling through the three labels, without evidence.
pub fn judgments(seed: usize) -> Vec<ItemJudgment> {
    (0..15)
        .map(|i| ItemJudgment {
            item_id: i as u8 + 1,
            label: ItemLabel::ALL[(i + seed) % 3],
            evidence: Vec::new(),
        })
        .collect()
}

/// A post-sized block of ordinary prose, roughly `words` words long.
pub fn prose(words: usize) -> String {
    const WORDS: [&str; 12] = [
        "I", "have", "been", "looking", "after", "my", "father", "since", "spring", "and", "rarely", "sleep",
    ];
    (0..words).map(|i| WORDS[i % WORDS.len()]).collect::<Vec<_>>().join(" ")
}
