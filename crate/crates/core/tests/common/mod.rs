//! Synthetic corpus with a scripted mock provider. Each post carries marker
//! words that decide how the mock answers, so the expected funnel is known
//! up front.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

pub const CAREGIVER: &str = "CaregiverSupport";
pub const NON_CAREGIVER: &str = "lonely";

const IRRELEVANT: &str = "qqoffside";
const LOW_SCORE: &str = "qqlowscore";
const OPENING: &str = "I am a woman looking after my dad and I feel cut off.";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fate {
    TooShort,
    TooLong,
    /// Rejected by the caregiver keyword rules, passes elsewhere.
    Survey,
    Irrelevant,
    BelowGate,
    Passes,
}

pub fn fate(i: usize) -> Fate {
    match i % 10 {
        0 => Fate::TooShort,
        1 => Fate::TooLong,
        2 => Fate::Survey,
        3 => Fate::Irrelevant,
        4 => Fate::BelowGate,
        _ => Fate::Passes,
    }
}

pub fn community(i: usize) -> &'static str {
    if i.is_multiple_of(2) {
        CAREGIVER
    } else {
        NON_CAREGIVER
    }
}

fn body(i: usize) -> String {
    let filler_words = match fate(i) {
        Fate::TooShort => 100,
        Fate::TooLong => 1100,
        _ => 160 + (i * 37) % 760,
    };
    let marker = match fate(i) {
        Fate::Survey => "Would anyone fill in a survey for me?",
        Fate::Irrelevant => IRRELEVANT,
        Fate::BelowGate => LOW_SCORE,
        _ => "",
    };
    format!("{OPENING} {marker} {}", "again ".repeat(filler_words).trim_end())
}

pub fn records(n: usize) -> Vec<Value> {
    (0..n)
        .map(|i| json!({"community": community(i), "platform_id": format!("t3_{i:04}"), "title": "", "body": body(i)}))
        .collect()
}

/// Expected (scraped, prefilter, relevance, gate) per community.
pub fn expected_funnel(n: usize, community_name: &str) -> (u64, u64, u64, u64) {
    let mut c = (0, 0, 0, 0);
    for i in (0..n).filter(|i| community(*i) == community_name) {
        let f = fate(i);
        c.0 += 1;
        let pre = match f {
            Fate::TooShort | Fate::TooLong => false,
            Fate::Survey => community_name != CAREGIVER,
            _ => true,
        };
        let rel = pre && f != Fate::Irrelevant;
        let gate = rel && f != Fate::BelowGate;
        c.1 += pre as u64;
        c.2 += rel as u64;
        c.3 += gate as u64;
    }
    c
}

fn quote(q: &str) -> Value {
    json!([{"quote": q}])
}

fn items(yes: usize, no: usize) -> Value {
    let items: Vec<Value> = (1..=15)
        .map(|id| {
            if id <= yes {
                json!({"item_id": id, "label": "yes", "evidence": quote("I feel cut off")})
            } else if id <= yes + no {
                json!({"item_id": id, "label": "no", "evidence": quote("looking after my dad")})
            } else {
                json!({"item_id": id, "label": "not_judgeable", "evidence": []})
            }
        })
        .collect();
    json!({"items": items})
}

fn rule(template: &str, contains: &[&str], reply: Value) -> Value {
    json!({"template_id": template, "contains": contains, "replies": [{"kind": "json", "value": reply}]})
}

pub fn mock_script() -> Value {
    let yes = json!({"relevant": true, "confidence": "high", "evidence": quote("looking after my dad"), "rationale": "caring for a parent"});
    let no = json!({"relevant": false, "confidence": "high", "evidence": [], "rationale": "off topic"});
    let unknown = json!({"value": null, "evidence": []});
    let profile = json!({
        "caregiver_gender": {"value": "female", "evidence": quote("woman")},
        "caregiver_age": unknown,
        "caregiving_duration": unknown,
        "relationship_type": unknown,
        "patients": [{
            "gender": unknown,
            "age": unknown,
            "diagnosis": unknown,
            "caregiver_relationship_to_patient": {"value": "daughter", "evidence": quote("my dad")},
            "patient_relationship_to_caregiver": unknown,
        }],
    });
    let causes = json!({"causes": [{
        "cause_type": "social",
        "caregiving_related": true,
        "evidence": quote("I feel cut off"),
        "explanation": "isolation from caring duties",
    }]});
    let mut rules = Vec::new();
    for t in ["relevance_caregiver", "relevance_noncaregiver"] {
        rules.push(rule(t, &[IRRELEVANT], no.clone()));
        rules.push(rule(t, &[], yes.clone()));
    }
    // 10 yes and 4 no scores 6; 11 yes and 4 no scores 7.
    rules.push(rule("loneliness_eval", &[LOW_SCORE], items(10, 4)));
    rules.push(rule("loneliness_eval", &[], items(11, 4)));
    rules.push(rule("cause_categorize", &[], causes));
    rules.push(rule("demographics", &[], profile));
    json!({"rules": rules})
}

pub struct Fixture {
    pub dir: PathBuf,
    pub corpus: PathBuf,
    pub script: PathBuf,
    pub cache: PathBuf,
}

impl Fixture {
    pub fn write(dir: &Path, n: usize) -> Fixture {
        let corpus = dir.join("raw.jsonl");
        let lines: Vec<String> = records(n).iter().map(|r| r.to_string()).collect();
        std::fs::write(&corpus, lines.join("\n") + "\n").unwrap();
        let script = dir.join("mock.json");
        std::fs::write(&script, serde_json::to_string_pretty(&mock_script()).unwrap()).unwrap();
        Fixture {
            dir: dir.to_path_buf(),
            corpus,
            script,
            cache: dir.join("cache"),
        }
    }

    /// Writes `<name>.toml` pointing at `out` and returns its path.
    pub fn config(&self, name: &str, out: &str, cache_mode: &str) -> PathBuf {
        let src = format!(
            "corpus = \"raw.jsonl\"\noutput_dir = \"{out}\"\ncache_dir = \"cache\"\ncache_mode = \"{cache_mode}\"\nmock_script = \"mock.json\"\n\n[gateway]\nrate_limit = 100000\nmax_in_flight = 16\n"
        );
        let path = self.dir.join(format!("{name}.toml"));
        std::fs::write(&path, src).unwrap();
        path
    }
}
