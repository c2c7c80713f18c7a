//! Dataset-level tables: per-community funnel counts, cause distributions,
//! and demographic histograms. Everything is written as CSV plus JSON, with a
//! flat plot-data file for external charting.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::causes::{CauseSet, CauseType};
use crate::corpus::{Population, Post, Stage, StageStatus};
use crate::demographics::{self, Attribute, BinnedProfile, BinningScheme, DemographicProfile, KnownRates};
use crate::error::{Error, Result};
use crate::jsonl;

/// `num / den` as a percentage truncated (not rounded) to two decimals.
/// Integer arithmetic keeps the rendering exact.
pub fn pct_truncated(num: u64, den: u64) -> String {
    if den == 0 {
        return "0.00".into();
    }
    let basis_points = num as u128 * 10_000 / den as u128;
    format!("{}.{:02}", basis_points / 100, basis_points % 100)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunnelRow {
    pub community: String,
    pub population: Population,
    pub scraped: u64,
    /// `None` when the community was not sampled.
    pub sampled: Option<u64>,
    pub prefilter_passed: u64,
    pub relevance_passed: u64,
    pub gate_passed: u64,
}

impl FunnelRow {
    fn new(community: String, population: Population) -> Self {
        FunnelRow {
            community,
            population,
            scraped: 0,
            sampled: None,
            prefilter_passed: 0,
            relevance_passed: 0,
            gate_passed: 0,
        }
    }

    fn add(&mut self, other: &FunnelRow) {
        self.scraped += other.scraped;
        if let Some(s) = other.sampled {
            self.sampled = Some(self.sampled.unwrap_or(0) + s);
        }
        self.prefilter_passed += other.prefilter_passed;
        self.relevance_passed += other.relevance_passed;
        self.gate_passed += other.gate_passed;
    }

    /// Counts along the stage order, skipping an absent sample column.
    pub fn stages(&self) -> Vec<u64> {
        let mut v = vec![self.scraped];
        v.extend(self.sampled);
        v.extend([self.prefilter_passed, self.relevance_passed, self.gate_passed]);
        v
    }

    pub fn is_monotone(&self) -> bool {
        self.stages().windows(2).all(|w| w[0] >= w[1])
    }

    pub fn gate_rate_pct(&self) -> String {
        pct_truncated(self.gate_passed, self.scraped)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationTotals {
    pub population: Population,
    pub totals: FunnelRow,
    pub gate_rate_pct: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunnelReport {
    pub rows: Vec<FunnelRow>,
    pub totals: Vec<PopulationTotals>,
}

/// Counts posts surviving each stage, per community, grouped by population.
/// A post counts as relevance-passed only when it also passed the prefilter,
/// and likewise down the chain.
pub fn funnel(posts: &[Post]) -> FunnelReport {
    let mut rows: BTreeMap<(Population, String), FunnelRow> = BTreeMap::new();
    for post in posts {
        let row = rows
            .entry((post.population, post.community.clone()))
            .or_insert_with(|| FunnelRow::new(post.community.clone(), post.population));
        row.scraped += 1;
        match post.status(Stage::Sample) {
            StageStatus::Pending => {}
            status => *row.sampled.get_or_insert(0) += u64::from(status == StageStatus::Passed),
        }
        let chain = post.in_sample() && post.passed(Stage::Prefilter);
        row.prefilter_passed += u64::from(chain);
        let chain = chain && post.passed(Stage::Relevance);
        row.relevance_passed += u64::from(chain);
        let chain = chain && post.passed(Stage::Gate);
        row.gate_passed += u64::from(chain);
    }
    let rows: Vec<FunnelRow> = rows.into_values().collect();
    let mut totals = Vec::new();
    for population in [Population::Caregiver, Population::NonCaregiver] {
        let mut t = FunnelRow::new("Total".into(), population);
        let mut any = false;
        for r in rows.iter().filter(|r| r.population == population) {
            t.add(r);
            any = true;
        }
        if any {
            totals.push(PopulationTotals {
                population,
                gate_rate_pct: t.gate_rate_pct(),
                totals: t,
            });
        }
    }
    FunnelReport { rows, totals }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub cause_type: CauseType,
    pub caregiving_related: bool,
    pub posts: u64,
    pub proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeShare {
    pub cause_type: CauseType,
    pub posts: u64,
    pub proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub population: Population,
    pub total_posts: u64,
    /// One row per (type, flag); proportions need not sum to 1.
    pub rows: Vec<DistributionRow>,
    /// Presence of a type under either flag.
    pub by_type: Vec<TypeShare>,
}

/// Share of posts with at least one cause of each (type, flag).
pub fn cause_distribution(cause_sets: &[&CauseSet], population: Population) -> Result<DistributionReport> {
    if cause_sets.is_empty() {
        return Err(Error::Empty(format!("no {population} cause sets")));
    }
    let total = cause_sets.len() as u64;
    let presence: Vec<_> = cause_sets.iter().map(|c| c.presence()).collect();
    let share = |n: u64| n as f64 / total as f64;
    let mut rows = Vec::new();
    let mut by_type = Vec::new();
    for t in CauseType::ALL {
        for flag in [true, false] {
            let posts = presence.iter().filter(|p| p.contains(&(t, flag))).count() as u64;
            rows.push(DistributionRow {
                cause_type: t,
                caregiving_related: flag,
                posts,
                proportion: share(posts),
            });
        }
        let posts = presence
            .iter()
            .filter(|p| p.contains(&(t, true)) || p.contains(&(t, false)))
            .count() as u64;
        by_type.push(TypeShare {
            cause_type: t,
            posts,
            proportion: share(posts),
        });
    }
    Ok(DistributionReport {
        population,
        total_posts: total,
        rows,
        by_type,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinCount {
    pub label: String,
    pub count: u64,
    pub proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub attribute: Attribute,
    /// Known values counted; per-patient attributes may contribute several
    /// per profile.
    pub known_values: u64,
    pub bins: Vec<BinCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicReport {
    pub profiles: u64,
    pub histograms: Vec<Histogram>,
    pub known_rates: KnownRates,
}

fn bin_order(scheme: &BinningScheme, attribute: Attribute) -> Vec<String> {
    let ranges = match attribute {
        Attribute::CaregiverAge => &scheme.caregiver_age,
        Attribute::PatientAge => &scheme.patient_age,
        Attribute::CaregivingDuration => &scheme.caregiving_duration_months,
        Attribute::PatientDiagnosis => {
            let mut v: Vec<String> = scheme.diagnosis.iter().map(|d| d.label.clone()).collect();
            v.extend([demographics::BOTH.to_string(), demographics::MISCELLANEOUS.to_string()]);
            return v;
        }
        _ => return Vec::new(),
    };
    ranges
        .iter()
        .map(|r| r.label.clone())
        .chain(std::iter::once(scheme.catch_all.clone()))
        .collect()
}

/// Bin histograms over Known values plus the known/unknown table.
pub fn demographic_distribution(
    binned: &[BinnedProfile],
    profiles: &[DemographicProfile],
    scheme: &BinningScheme,
) -> Result<DemographicReport> {
    if binned.is_empty() {
        return Err(Error::Empty("no binned profiles".into()));
    }
    let known_rates = demographics::known_rates(profiles, &Attribute::ALL)?;
    let histograms = Attribute::ALL
        .iter()
        .map(|&attribute| {
            let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
            for p in binned {
                for v in p.get(attribute) {
                    *counts.entry(v.as_str()).or_default() += 1;
                }
            }
            let known_values: u64 = counts.values().sum();
            let order = bin_order(scheme, attribute);
            let mut labels: Vec<&str> = order
                .iter()
                .map(String::as_str)
                .filter(|l| counts.contains_key(l))
                .collect();
            labels.extend(counts.keys().copied().filter(|k| !order.iter().any(|o| o == k)));
            let bins = labels
                .into_iter()
                .map(|label| BinCount {
                    label: label.to_string(),
                    count: counts[label],
                    proportion: counts[label] as f64 / known_values as f64,
                })
                .collect();
            Histogram {
                attribute,
                known_values,
                bins,
            }
        })
        .collect();
    Ok(DemographicReport {
        profiles: binned.len() as u64,
        histograms,
        known_rates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub name: String,
    pub points: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ReportBundle {
    pub funnel: Option<FunnelReport>,
    pub causes: Vec<DistributionReport>,
    pub demographics: Option<DemographicReport>,
}

impl ReportBundle {
    pub fn plot_data(&self) -> Vec<PlotSeries> {
        let mut out = Vec::new();
        for d in &self.causes {
            out.push(PlotSeries {
                name: format!("causes/{}", d.population),
                points: d
                    .rows
                    .iter()
                    .map(|r| {
                        let flag = if r.caregiving_related { "caregiving" } else { "not_caregiving" };
                        (format!("{}/{flag}", r.cause_type), r.proportion)
                    })
                    .collect(),
            });
        }
        if let Some(demo) = &self.demographics {
            for h in &demo.histograms {
                out.push(PlotSeries {
                    name: format!("demographics/{}", h.attribute.as_str()),
                    points: h.bins.iter().map(|b| (b.label.clone(), b.proportion)).collect(),
                });
            }
            out.push(PlotSeries {
                name: "demographics/known_pct".into(),
                points: demo
                    .known_rates
                    .rows
                    .iter()
                    .map(|r| (r.attribute.as_str().to_string(), r.known_pct))
                    .collect(),
            });
        }
        out
    }

    /// Writes every report into `dir`. Returns the written paths in a fixed
    /// order.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        if let Some(f) = &self.funnel {
            written.push(write_csv(&dir.join("funnel.csv"), funnel_csv(f))?);
            written.push(write_json(&dir.join("funnel.json"), f)?);
        }
        for d in &self.causes {
            let stem = format!("causes_{}", d.population);
            let rows = std::iter::once(vec![
                "cause_type".to_string(),
                "caregiving_related".into(),
                "posts".into(),
                "total_posts".into(),
                "proportion".into(),
            ])
            .chain(d.rows.iter().map(|r| {
                vec![
                    r.cause_type.to_string(),
                    r.caregiving_related.to_string(),
                    r.posts.to_string(),
                    d.total_posts.to_string(),
                    format!("{:.4}", r.proportion),
                ]
            }))
            .collect();
            written.push(write_csv(&dir.join(format!("{stem}.csv")), rows)?);
            written.push(write_json(&dir.join(format!("{stem}.json")), d)?);
        }
        if let Some(demo) = &self.demographics {
            let mut rows = vec![vec!["attribute".to_string(), "bin".into(), "count".into(), "proportion".into()]];
            for h in &demo.histograms {
                for b in &h.bins {
                    rows.push(vec![
                        h.attribute.as_str().to_string(),
                        b.label.clone(),
                        b.count.to_string(),
                        format!("{:.4}", b.proportion),
                    ]);
                }
            }
            written.push(write_csv(&dir.join("demographic_bins.csv"), rows)?);
            let mut rows = vec![vec![
                "attribute".to_string(),
                "known".into(),
                "total".into(),
                "known_pct".into(),
                "unknown_pct".into(),
            ]];
            for r in &demo.known_rates.rows {
                rows.push(vec![
                    r.attribute.as_str().to_string(),
                    r.known.to_string(),
                    r.total.to_string(),
                    format!("{:.2}", r.known_pct),
                    format!("{:.2}", r.unknown_pct),
                ]);
            }
            written.push(write_csv(&dir.join("demographic_known.csv"), rows)?);
            written.push(write_json(&dir.join("demographics.json"), demo)?);
        }
        written.push(write_json(&dir.join("plot_data.json"), &self.plot_data())?);
        Ok(written)
    }
}

fn funnel_csv(f: &FunnelReport) -> Vec<Vec<String>> {
    let header = ["community", "population", "scraped", "sampled", "prefilter_passed", "relevance_passed", "gate_passed", "gate_rate_pct"];
    let line = |r: &FunnelRow| {
        vec![
            r.community.clone(),
            r.population.to_string(),
            r.scraped.to_string(),
            r.sampled.map(|s| s.to_string()).unwrap_or_default(),
            r.prefilter_passed.to_string(),
            r.relevance_passed.to_string(),
            r.gate_passed.to_string(),
            r.gate_rate_pct(),
        ]
    };
    std::iter::once(header.iter().map(|h| h.to_string()).collect())
        .chain(f.rows.iter().map(line))
        .chain(f.totals.iter().map(|t| line(&t.totals)))
        .collect()
}

fn write_csv(path: &Path, rows: Vec<Vec<String>>) -> Result<PathBuf> {
    jsonl::write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        for row in &rows {
            csv.write_record(row).map_err(std::io::Error::other)?;
        }
        csv.flush()
    })?;
    Ok(path.to_path_buf())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf> {
    jsonl::write_json(path, value)?;
    Ok(path.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causes::Cause;
    use crate::corpus::PostId;
    use crate::demographics::Field;
    use crate::evidence::EvidenceSpan;
    use proptest::prelude::*;

    fn post(community: &str, population: Population, i: usize, reach: usize) -> Post {
        let mut p = Post::new(PostId::derive(community, &i.to_string()), community.into(), population, String::new(), "b".into());
        p.record(Stage::Ingest, StageStatus::Passed);
        for (k, stage) in [Stage::Prefilter, Stage::Relevance, Stage::Gate].into_iter().enumerate() {
            let status = if reach > k { StageStatus::Passed } else { StageStatus::Rejected };
            p.record(stage, status);
            if status == StageStatus::Rejected {
                break;
            }
        }
        p
    }

    #[test]
    fn truncated_percentages() {
        assert_eq!(pct_truncated(387, 28351), "1.36");
        assert_eq!(pct_truncated(1, 3), "33.33");
        assert_eq!(pct_truncated(2, 3), "66.66");
        assert_eq!(pct_truncated(5, 5), "100.00");
        assert_eq!(pct_truncated(0, 0), "0.00");
    }

    #[test]
    fn funnel_counts_and_totals() {
        let mut posts = Vec::new();
        for i in 0..10 {
            posts.push(post("caregivers", Population::Caregiver, i, i % 4));
        }
        for i in 0..4 {
            posts.push(post("dementia", Population::Caregiver, i, 3));
        }
        let f = funnel(&posts);
        let cg = f.rows.iter().find(|r| r.community == "caregivers").unwrap();
        // reach is i % 4 for i in 0..10, so 7 reach >= 1, 4 reach >= 2, 2 reach 3
        assert_eq!((cg.scraped, cg.prefilter_passed, cg.relevance_passed, cg.gate_passed), (10, 7, 4, 2));
        assert_eq!(cg.sampled, None);
        let t = &f.totals[0].totals;
        assert_eq!((t.scraped, t.gate_passed), (14, 6));
        assert!(f.rows.iter().all(FunnelRow::is_monotone));
        assert_eq!(f.totals.len(), 1);
    }

    #[test]
    fn empty_corpus_has_no_rows() {
        let f = funnel(&[]);
        assert!(f.rows.is_empty() && f.totals.is_empty());
    }

    #[test]
    fn sampling_column_appears_when_sampled() {
        let mut a = post("lonely", Population::NonCaregiver, 1, 3);
        a.record(Stage::Sample, StageStatus::Passed);
        let mut b = post("lonely", Population::NonCaregiver, 2, 3);
        b.record(Stage::Sample, StageStatus::Rejected);
        let f = funnel(&[a, b]);
        assert_eq!(f.rows[0].sampled, Some(1));
        assert_eq!(f.rows[0].gate_passed, 1);
    }

    fn cause(t: CauseType, flag: bool) -> Cause {
        Cause {
            cause_type: t,
            caregiving_related: flag,
            evidence: vec![EvidenceSpan { start: 0, end: 1, quote: "x".into() }],
            explanation: String::new(),
        }
    }

    #[test]
    fn network_share_among_gate_passed_posts() {
        let sets: Vec<CauseSet> = (0..387)
            .map(|i| CauseSet {
                post_id: PostId(format!("{i}")),
                causes: if i < 217 { vec![cause(CauseType::Network, true)] } else { vec![] },
            })
            .collect();
        let refs: Vec<&CauseSet> = sets.iter().collect();
        let d = cause_distribution(&refs, Population::Caregiver).unwrap();
        let row = d.rows.iter().find(|r| r.cause_type == CauseType::Network && r.caregiving_related).unwrap();
        assert_eq!(pct_truncated(row.posts, d.total_posts), "56.07");
        assert!(cause_distribution(&[], Population::Caregiver).is_err());
    }

    #[test]
    fn duplicate_causes_count_once() {
        let one = CauseSet {
            post_id: PostId::from("a"),
            causes: vec![cause(CauseType::Social, false), cause(CauseType::Social, false)],
        };
        let d = cause_distribution(&[&one], Population::NonCaregiver).unwrap();
        let social = d.rows.iter().find(|r| r.cause_type == CauseType::Social && !r.caregiving_related).unwrap();
        assert_eq!((social.posts, social.proportion), (1, 1.0));
    }

    fn gendered(g: &str) -> DemographicProfile {
        DemographicProfile {
            caregiver_gender: Field::Known {
                raw: g.into(),
                normalized: g.into(),
                evidence: vec![EvidenceSpan { start: 0, end: 1, quote: "x".into() }],
            },
            ..Default::default()
        }
    }

    #[test]
    fn gender_histogram_over_known_values() {
        let scheme = BinningScheme::shipped();
        let mut profiles: Vec<_> = (0..6).map(|_| gendered("female")).collect();
        profiles.push(gendered("male"));
        profiles.push(DemographicProfile::default());
        let binned: Vec<_> = profiles.iter().map(|p| demographics::bin(p, &scheme)).collect();
        let r = demographic_distribution(&binned, &profiles, &scheme).unwrap();
        let h = r.histograms.iter().find(|h| h.attribute == Attribute::CaregiverGender).unwrap();
        assert_eq!(h.known_values, 7);
        let female = h.bins.iter().find(|b| b.label == "female").unwrap();
        assert!((female.proportion - 0.857).abs() < 1e-3);
        assert!(demographic_distribution(&[], &[], &scheme).is_err());
    }

    #[test]
    fn bundle_writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let bundle = ReportBundle {
            funnel: Some(funnel(&[post("alone", Population::NonCaregiver, 0, 3)])),
            ..Default::default()
        };
        let paths = bundle.write(dir.path()).unwrap();
        assert_eq!(paths.len(), 3);
        let csv = std::fs::read_to_string(dir.path().join("funnel.csv")).unwrap();
        assert!(csv.starts_with("community,population,scraped,sampled"));
        assert!(csv.contains("Total,non_caregiver,1,,1,1,1,100.00"));
    }

    proptest! {
        #[test]
        fn histogram_matches_tally(labels in proptest::collection::vec(0usize..3, 1..60)) {
            let names = ["female", "male", "nonbinary"];
            let scheme = BinningScheme::shipped();
            let profiles: Vec<_> = labels.iter().map(|i| gendered(names[*i])).collect();
            let binned: Vec<_> = profiles.iter().map(|p| demographics::bin(p, &scheme)).collect();
            let r = demographic_distribution(&binned, &profiles, &scheme).unwrap();
            let h = r.histograms.iter().find(|h| h.attribute == Attribute::CaregiverGender).unwrap();
            for (i, name) in names.iter().enumerate() {
                let tally = labels.iter().filter(|l| **l == i).count() as u64;
                let got = h.bins.iter().find(|b| b.label == *name).map(|b| b.count).unwrap_or(0);
                prop_assert_eq!(got, tally);
            }
            prop_assert!((h.bins.iter().map(|b| b.proportion).sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn funnel_is_monotone(reaches in proptest::collection::vec(0usize..4, 0..80)) {
            let posts: Vec<_> = reaches.iter().enumerate().map(|(i, r)| post("alone", Population::NonCaregiver, i, *r)).collect();
            let f = funnel(&posts);
            prop_assert!(f.rows.iter().all(FunnelRow::is_monotone));
        }

        #[test]
        fn truncation_never_exceeds_exact(num in 0u64..100_000, den in 1u64..100_000) {
            let shown: f64 = pct_truncated(num, den).parse().unwrap();
            let exact = num as f64 * 100.0 / den as f64;
            prop_assert!(shown <= exact + 1e-9 && exact - shown < 0.01 + 1e-9);
        }
    }
}
