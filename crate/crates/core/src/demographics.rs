//! Nine demographic attributes extracted from caregiver posts, their
//! normalization, report bins and known/unknown rates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{Population, Post};
use crate::error::{Error, Result};
use crate::evidence::{self, EvidenceSpan, RawEvidence, Violation, ViolationKind};
use crate::gateway::{Annotated, Bindings, StageCall};

pub const UNKNOWN: &str = "unknown";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    CaregiverGender,
    CaregiverAge,
    CaregivingDuration,
    PatientGender,
    PatientAge,
    PatientDiagnosis,
    CaregiverRelationshipToPatient,
    PatientRelationshipToCaregiver,
    RelationshipType,
}

impl Attribute {
    pub const ALL: [Attribute; 9] = [
        Attribute::CaregiverGender,
        Attribute::CaregiverAge,
        Attribute::CaregivingDuration,
        Attribute::PatientGender,
        Attribute::PatientAge,
        Attribute::PatientDiagnosis,
        Attribute::CaregiverRelationshipToPatient,
        Attribute::PatientRelationshipToCaregiver,
        Attribute::RelationshipType,
    ];

    /// The six attributes used for dataset-level reporting.
    pub const REPORTED: [Attribute; 6] = [
        Attribute::CaregiverAge,
        Attribute::CaregivingDuration,
        Attribute::CaregiverGender,
        Attribute::CaregiverRelationshipToPatient,
        Attribute::PatientAge,
        Attribute::PatientDiagnosis,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Attribute::CaregiverGender => "caregiver_gender",
            Attribute::CaregiverAge => "caregiver_age",
            Attribute::CaregivingDuration => "caregiving_duration",
            Attribute::PatientGender => "patient_gender",
            Attribute::PatientAge => "patient_age",
            Attribute::PatientDiagnosis => "patient_diagnosis",
            Attribute::CaregiverRelationshipToPatient => "caregiver_relationship_to_patient",
            Attribute::PatientRelationshipToCaregiver => "patient_relationship_to_caregiver",
            Attribute::RelationshipType => "relationship_type",
        }
    }

    /// Attributes recorded once per care recipient.
    pub fn per_patient(&self) -> bool {
        matches!(
            self,
            Attribute::PatientGender
                | Attribute::PatientAge
                | Attribute::PatientDiagnosis
                | Attribute::CaregiverRelationshipToPatient
                | Attribute::PatientRelationshipToCaregiver
        )
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Field {
    Known {
        raw: String,
        normalized: String,
        evidence: Vec<EvidenceSpan>,
    },
    #[default]
    Unknown,
}

impl Field {
    pub fn is_known(&self) -> bool {
        matches!(self, Field::Known { .. })
    }

    /// The normalized value, or `"unknown"`.
    pub fn label(&self) -> &str {
        match self {
            Field::Known { normalized, .. } => normalized,
            Field::Unknown => UNKNOWN,
        }
    }

    pub fn evidence(&self) -> &[EvidenceSpan] {
        match self {
            Field::Known { evidence, .. } => evidence,
            Field::Unknown => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct PatientProfile {
    #[serde(default)]
    pub gender: Field,
    #[serde(default)]
    pub age: Field,
    #[serde(default)]
    pub diagnosis: Field,
    #[serde(default)]
    pub caregiver_relationship_to_patient: Field,
    #[serde(default)]
    pub patient_relationship_to_caregiver: Field,
}

impl PatientProfile {
    fn field(&self, attribute: Attribute) -> Option<&Field> {
        Some(match attribute {
            Attribute::PatientGender => &self.gender,
            Attribute::PatientAge => &self.age,
            Attribute::PatientDiagnosis => &self.diagnosis,
            Attribute::CaregiverRelationshipToPatient => &self.caregiver_relationship_to_patient,
            Attribute::PatientRelationshipToCaregiver => &self.patient_relationship_to_caregiver,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct DemographicProfile {
    #[serde(default)]
    pub caregiver_gender: Field,
    #[serde(default)]
    pub caregiver_age: Field,
    #[serde(default)]
    pub caregiving_duration: Field,
    #[serde(default)]
    pub relationship_type: Field,
    #[serde(default)]
    pub patients: Vec<PatientProfile>,
}

impl DemographicProfile {
    /// Fields holding `attribute`: one for caregiver-level attributes, one per
    /// patient otherwise.
    pub fn fields(&self, attribute: Attribute) -> Vec<&Field> {
        match attribute {
            Attribute::CaregiverGender => vec![&self.caregiver_gender],
            Attribute::CaregiverAge => vec![&self.caregiver_age],
            Attribute::CaregivingDuration => vec![&self.caregiving_duration],
            Attribute::RelationshipType => vec![&self.relationship_type],
            _ => self.patients.iter().filter_map(|p| p.field(attribute)).collect(),
        }
    }

    pub fn is_known(&self, attribute: Attribute) -> bool {
        self.fields(attribute).iter().any(|f| f.is_known())
    }

    /// Comparable label for agreement math. Per-patient values are joined in
    /// patient order; all-unknown collapses to `"unknown"`.
    pub fn label(&self, attribute: Attribute) -> String {
        if !self.is_known(attribute) {
            return UNKNOWN.to_string();
        }
        self.fields(attribute)
            .iter()
            .map(|f| f.label())
            .collect::<Vec<_>>()
            .join("|")
    }

    /// Evidence invariants: Known needs a valid quote, Unknown takes none.
    pub fn check(&self, text: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut visit = |path: String, field: &Field| match field {
            Field::Known { evidence, .. } => {
                if evidence.is_empty() {
                    out.push(Violation::new(ViolationKind::EmptyEvidence, format!("{path}/evidence"), "known value needs a quote"));
                }
                evidence::check_all(text, evidence, &path, &mut out);
            }
            Field::Unknown => {}
        };
        visit("/caregiver_gender".into(), &self.caregiver_gender);
        visit("/caregiver_age".into(), &self.caregiver_age);
        visit("/caregiving_duration".into(), &self.caregiving_duration);
        visit("/relationship_type".into(), &self.relationship_type);
        for (i, p) in self.patients.iter().enumerate() {
            visit(format!("/patients/{i}/gender"), &p.gender);
            visit(format!("/patients/{i}/age"), &p.age);
            visit(format!("/patients/{i}/diagnosis"), &p.diagnosis);
            visit(format!("/patients/{i}/caregiver_relationship_to_patient"), &p.caregiver_relationship_to_patient);
            visit(format!("/patients/{i}/patient_relationship_to_caregiver"), &p.patient_relationship_to_caregiver);
        }
        out
    }
}

static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(\d+)\s*(')?(s)?\b").unwrap());
static DURATION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(\d+(?:\.\d+)?|an?|one|two|three|four|five|six|seven|eight|nine|ten|eleven|twelve|fifteen|twenty|thirty|few|couple of|couple|half an?|half)\s+(years?|yrs?|months?|weeks?)\b").unwrap()
});

fn word_number(w: &str) -> Option<f64> {
    let w = w.to_lowercase();
    Some(match w.as_str() {
        "a" | "an" | "one" => 1.0,
        "two" | "couple" | "couple of" => 2.0,
        "three" | "few" => 3.0,
        "four" => 4.0,
        "five" => 5.0,
        "six" => 6.0,
        "seven" => 7.0,
        "eight" => 8.0,
        "nine" => 9.0,
        "ten" => 10.0,
        "eleven" => 11.0,
        "twelve" => 12.0,
        "fifteen" => 15.0,
        "twenty" => 20.0,
        "thirty" => 30.0,
        "half" | "half a" | "half an" => 0.5,
        _ => return w.parse().ok(),
    })
}

/// Age in years. A decade such as "80s" maps to its midpoint (85).
pub fn normalize_age(raw: &str) -> Option<u32> {
    let caps = NUMBER.captures(raw)?;
    let n: u32 = caps[1].parse().ok()?;
    if caps.get(3).is_some() && n.is_multiple_of(10) {
        Some(n + 5)
    } else {
        Some(n)
    }
}

/// Duration in whole months, summing every "<n> <unit>" phrase.
pub fn normalize_duration_months(raw: &str) -> Option<u32> {
    let mut months = 0.0;
    let mut found = false;
    for caps in DURATION.captures_iter(raw) {
        let n = word_number(&caps[1])?;
        let unit = caps[2].to_lowercase();
        months += if unit.starts_with('y') {
            n * 12.0
        } else if unit.starts_with('m') {
            n
        } else {
            n / 4.0
        };
        found = true;
    }
    found.then(|| months.floor() as u32)
}

pub fn normalize_gender(raw: &str) -> Option<&'static str> {
    let r = raw.trim().to_lowercase();
    const FEMALE: [&str; 14] = [
        "female", "f", "woman", "women", "girl", "she", "her", "mother", "mom", "daughter", "wife", "sister", "grandmother", "aunt",
    ];
    const MALE: [&str; 14] = [
        "male", "m", "man", "men", "boy", "he", "him", "father", "dad", "son", "husband", "brother", "grandfather", "uncle",
    ];
    if r.contains("non-binary") || r.contains("nonbinary") || r == "nb" || r == "enby" {
        return Some("nonbinary");
    }
    let words: Vec<&str> = r.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).collect();
    if words.iter().any(|w| FEMALE.contains(w)) {
        Some("female")
    } else if words.iter().any(|w| MALE.contains(w)) {
        Some("male")
    } else {
        None
    }
}

pub fn normalize_relationship(raw: &str) -> String {
    let r = raw.trim().to_lowercase();
    let canonical = match r.as_str() {
        "mom" | "mum" | "mommy" | "mama" | "ma" => "mother",
        "dad" | "daddy" | "papa" | "pa" => "father",
        "grandma" | "granny" | "nana" => "grandmother",
        "grandpa" | "granddad" | "grandad" => "grandfather",
        "hubby" => "husband",
        "boyfriend" | "girlfriend" | "fiance" | "fiancee" => "partner",
        other => other,
    };
    canonical.to_string()
}

/// Canonical form of a raw value for `attribute`.
pub fn normalize(attribute: Attribute, raw: &str) -> String {
    match attribute {
        Attribute::CaregiverGender | Attribute::PatientGender => normalize_gender(raw)
            .map(str::to_string)
            .unwrap_or_else(|| raw.trim().to_lowercase()),
        Attribute::CaregiverAge | Attribute::PatientAge => normalize_age(raw)
            .map(|n| n.to_string())
            .unwrap_or_else(|| raw.trim().to_lowercase()),
        Attribute::CaregivingDuration => normalize_duration_months(raw)
            .map(|n| n.to_string())
            .unwrap_or_else(|| raw.trim().to_lowercase()),
        Attribute::CaregiverRelationshipToPatient | Attribute::PatientRelationshipToCaregiver => {
            normalize_relationship(raw)
        }
        Attribute::PatientDiagnosis | Attribute::RelationshipType => raw.trim().to_lowercase(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RangeBin {
    pub label: String,
    pub min: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<u32>,
}

impl RangeBin {
    pub fn contains(&self, v: u32) -> bool {
        v >= self.min && self.max.is_none_or(|m| v <= m)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosisCategory {
    pub label: String,
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinningScheme {
    pub catch_all: String,
    pub caregiver_age: Vec<RangeBin>,
    pub patient_age: Vec<RangeBin>,
    pub caregiving_duration_months: Vec<RangeBin>,
    /// Exactly two categories; a profile matching both maps to `"both"`,
    /// one matching neither to `"miscellaneous"`.
    pub diagnosis: Vec<DiagnosisCategory>,
}

pub const BOTH: &str = "both";
pub const MISCELLANEOUS: &str = "miscellaneous";

impl BinningScheme {
    pub fn from_toml(src: &str) -> Result<Self> {
        let s: BinningScheme = toml::from_str(src).map_err(|e| Error::parse("binning scheme", e))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&src)
    }

    pub fn shipped() -> Self {
        Self::from_toml(include_str!("../assets/binning.toml")).expect("shipped binning is valid")
    }

    /// Range bins must be ordered and non-overlapping.
    pub fn validate(&self) -> Result<()> {
        for (name, bins) in [
            ("caregiver_age", &self.caregiver_age),
            ("patient_age", &self.patient_age),
            ("caregiving_duration_months", &self.caregiving_duration_months),
        ] {
            for (i, b) in bins.iter().enumerate() {
                if b.max.is_some_and(|m| m < b.min) {
                    return Err(Error::Config(format!("{name} bin `{}` has max below min", b.label)));
                }
                if let Some(next) = bins.get(i + 1) {
                    match b.max {
                        Some(m) if m < next.min => {}
                        _ => {
                            return Err(Error::Config(format!(
                                "{name} bins `{}` and `{}` overlap or are out of order",
                                b.label, next.label
                            )))
                        }
                    }
                }
            }
        }
        if self.diagnosis.len() != 2 {
            return Err(Error::Config("diagnosis table needs exactly two categories".into()));
        }
        Ok(())
    }

    fn range(&self, bins: &[RangeBin], value: Option<u32>, attribute: Attribute, raw: &str, warnings: &mut Vec<String>) -> String {
        match value.and_then(|v| bins.iter().find(|b| b.contains(v))) {
            Some(b) => b.label.clone(),
            None => {
                warnings.push(format!("{attribute}: `{raw}` falls outside every bin"));
                self.catch_all.clone()
            }
        }
    }

    fn diagnosis_categories(&self, text: &str) -> BTreeSet<usize> {
        let lower = text.to_lowercase();
        self.diagnosis
            .iter()
            .enumerate()
            .filter(|(_, c)| c.keywords.iter().any(|k| lower.contains(&k.to_lowercase())))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Report-ready view of a profile. An empty list means Unknown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct BinnedProfile {
    pub values: BTreeMap<Attribute, Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl BinnedProfile {
    pub fn get(&self, attribute: Attribute) -> &[String] {
        self.values.get(&attribute).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Maps every Known value to its bin. Diagnosis collapses across patients to
/// one caregiver category.
pub fn bin(profile: &DemographicProfile, scheme: &BinningScheme) -> BinnedProfile {
    let mut out = BinnedProfile::default();
    for attribute in Attribute::ALL {
        let known: Vec<(&str, &str)> = profile
            .fields(attribute)
            .into_iter()
            .filter_map(|f| match f {
                Field::Known { raw, normalized, .. } => Some((raw.as_str(), normalized.as_str())),
                Field::Unknown => None,
            })
            .collect();
        let mut labels = Vec::new();
        if attribute == Attribute::PatientDiagnosis {
            if !known.is_empty() {
                let hits: BTreeSet<usize> = known
                    .iter()
                    .flat_map(|(raw, norm)| scheme.diagnosis_categories(&format!("{raw} {norm}")))
                    .collect();
                labels.push(match hits.len() {
                    0 => MISCELLANEOUS.to_string(),
                    1 => scheme.diagnosis[*hits.iter().next().unwrap()].label.clone(),
                    _ => BOTH.to_string(),
                });
            }
        } else {
            for (raw, norm) in known {
                let label = match attribute {
                    Attribute::CaregiverAge => {
                        scheme.range(&scheme.caregiver_age, norm.parse().ok(), attribute, raw, &mut out.warnings)
                    }
                    Attribute::PatientAge => {
                        scheme.range(&scheme.patient_age, norm.parse().ok(), attribute, raw, &mut out.warnings)
                    }
                    Attribute::CaregivingDuration => scheme.range(
                        &scheme.caregiving_duration_months,
                        norm.parse().ok(),
                        attribute,
                        raw,
                        &mut out.warnings,
                    ),
                    _ => norm.to_string(),
                };
                labels.push(label);
            }
        }
        out.values.insert(attribute, labels);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownRate {
    pub attribute: Attribute,
    pub known: usize,
    pub total: usize,
    pub known_pct: f64,
    pub unknown_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownRates {
    pub rows: Vec<KnownRate>,
    pub mean_known_pct: f64,
    pub mean_unknown_pct: f64,
}

/// Share of profiles with each attribute known, plus the unweighted mean.
pub fn known_rates(profiles: &[DemographicProfile], attributes: &[Attribute]) -> Result<KnownRates> {
    if profiles.is_empty() {
        return Err(Error::Empty("no demographic profiles".into()));
    }
    if attributes.is_empty() {
        return Err(Error::Empty("no attributes selected".into()));
    }
    let total = profiles.len();
    let rows: Vec<KnownRate> = attributes
        .iter()
        .map(|&attribute| {
            let known = profiles.iter().filter(|p| p.is_known(attribute)).count();
            let known_pct = known as f64 / total as f64 * 100.0;
            KnownRate {
                attribute,
                known,
                total,
                known_pct,
                unknown_pct: 100.0 - known_pct,
            }
        })
        .collect();
    let mean_known_pct = mean(rows.iter().map(|r| r.known_pct));
    Ok(KnownRates {
        rows,
        mean_known_pct,
        mean_unknown_pct: 100.0 - mean_known_pct,
    })
}

/// Unweighted mean; 0 for an empty sequence.
pub fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawField {
    value: Option<String>,
    #[serde(default)]
    evidence: Vec<RawEvidence>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPatient {
    gender: RawField,
    age: RawField,
    diagnosis: RawField,
    caregiver_relationship_to_patient: RawField,
    patient_relationship_to_caregiver: RawField,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    caregiver_gender: RawField,
    caregiver_age: RawField,
    caregiving_duration: RawField,
    relationship_type: RawField,
    #[serde(default)]
    patients: Vec<RawPatient>,
}

fn convert(text: &str, raw: RawField, attribute: Attribute, path: &str, out: &mut Vec<Violation>) -> Field {
    match raw.value.filter(|v| !v.trim().is_empty()) {
        None => {
            if !raw.evidence.is_empty() {
                out.push(Violation::new(
                    ViolationKind::UnexpectedEvidence,
                    format!("{path}/evidence"),
                    "unknown value takes no evidence",
                ));
            }
            Field::Unknown
        }
        Some(value) => {
            if raw.evidence.is_empty() {
                out.push(Violation::new(ViolationKind::EmptyEvidence, format!("{path}/evidence"), "known value needs a quote"));
            }
            let evidence = evidence::resolve_all(text, &raw.evidence, path, out);
            Field::Known {
                normalized: normalize(attribute, &value),
                raw: value,
                evidence,
            }
        }
    }
}

pub fn parse_profile(text: &str, value: &Value) -> std::result::Result<DemographicProfile, Vec<Violation>> {
    let raw: RawProfile = evidence::from_value(value)?;
    let mut out = Vec::new();
    let profile = DemographicProfile {
        caregiver_gender: convert(text, raw.caregiver_gender, Attribute::CaregiverGender, "/caregiver_gender", &mut out),
        caregiver_age: convert(text, raw.caregiver_age, Attribute::CaregiverAge, "/caregiver_age", &mut out),
        caregiving_duration: convert(text, raw.caregiving_duration, Attribute::CaregivingDuration, "/caregiving_duration", &mut out),
        relationship_type: convert(text, raw.relationship_type, Attribute::RelationshipType, "/relationship_type", &mut out),
        patients: raw
            .patients
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                let path = |f: &str| format!("/patients/{i}/{f}");
                PatientProfile {
                    gender: convert(text, p.gender, Attribute::PatientGender, &path("gender"), &mut out),
                    age: convert(text, p.age, Attribute::PatientAge, &path("age"), &mut out),
                    diagnosis: convert(text, p.diagnosis, Attribute::PatientDiagnosis, &path("diagnosis"), &mut out),
                    caregiver_relationship_to_patient: convert(
                        text,
                        p.caregiver_relationship_to_patient,
                        Attribute::CaregiverRelationshipToPatient,
                        &path("caregiver_relationship_to_patient"),
                        &mut out,
                    ),
                    patient_relationship_to_caregiver: convert(
                        text,
                        p.patient_relationship_to_caregiver,
                        Attribute::PatientRelationshipToCaregiver,
                        &path("patient_relationship_to_caregiver"),
                        &mut out,
                    ),
                }
            })
            .collect(),
    };
    if out.is_empty() {
        Ok(profile)
    } else {
        Err(out)
    }
}

/// Works on any caregiver post; the pipeline only calls it after the gate.
pub fn extract(call: &StageCall<'_>, post: &Post, include_title: bool) -> Result<Annotated<DemographicProfile>> {
    if post.population != Population::Caregiver {
        return Err(Error::Precondition(format!(
            "demographics are extracted from caregiver posts only; {} is {}",
            post.post_id, post.population
        )));
    }
    let text = post.analysis_text(include_title);
    let mut bindings = Bindings::new();
    bindings.insert("post_text".into(), text.clone());
    call.run(&bindings, |v| parse_profile(&text, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    fn known(attribute: Attribute, raw: &str) -> Field {
        Field::Known {
            raw: raw.into(),
            normalized: normalize(attribute, raw),
            evidence: vec![],
        }
    }

    #[test]
    fn normalizers() {
        assert_eq!(normalize_age("25"), Some(25));
        assert_eq!(normalize_age("in her 80s"), Some(85));
        assert_eq!(normalize_age("81"), Some(81));
        assert_eq!(normalize_duration_months("3 years"), Some(36));
        assert_eq!(normalize_duration_months("two years and 6 months"), Some(30));
        assert_eq!(normalize_duration_months("a few months"), Some(3));
        assert_eq!(normalize_duration_months("forever"), None);
        assert_eq!(normalize_gender("25 year old woman"), Some("female"));
        assert_eq!(normalize_gender("M"), Some("male"));
        assert_eq!(normalize_relationship("Mom"), "mother");
    }

    #[test]
    fn bins_for_the_documented_examples() {
        let scheme = BinningScheme::shipped();
        let mut p = DemographicProfile {
            caregiver_age: known(Attribute::CaregiverAge, "25"),
            caregiving_duration: known(Attribute::CaregivingDuration, "3 years"),
            ..Default::default()
        };
        p.patients = vec![
            PatientProfile {
                diagnosis: known(Attribute::PatientDiagnosis, "stage 4 lung cancer"),
                ..Default::default()
            },
            PatientProfile {
                diagnosis: known(Attribute::PatientDiagnosis, "Alzheimer's"),
                ..Default::default()
            },
        ];
        let b = bin(&p, &scheme);
        assert_eq!(b.get(Attribute::CaregiverAge), ["21–30"]);
        assert_eq!(b.get(Attribute::CaregivingDuration), ["1 to 5 years"]);
        assert_eq!(b.get(Attribute::PatientDiagnosis), [BOTH]);
        assert!(b.get(Attribute::CaregiverGender).is_empty());
        assert!(b.warnings.is_empty());
    }

    #[test]
    fn diagnosis_categories() {
        let scheme = BinningScheme::shipped();
        let with = |d: &str| {
            let p = DemographicProfile {
                patients: vec![PatientProfile {
                    diagnosis: known(Attribute::PatientDiagnosis, d),
                    ..Default::default()
                }],
                ..Default::default()
            };
            bin(&p, &scheme).get(Attribute::PatientDiagnosis).to_vec()
        };
        assert_eq!(with("leukemia"), ["cancer"]);
        assert_eq!(with("Lewy body dementia"), ["dementia"]);
        assert_eq!(with("ALS"), [MISCELLANEOUS]);
    }

    #[test]
    fn duration_boundaries_are_lower_inclusive() {
        let scheme = BinningScheme::shipped();
        let label = |raw: &str| {
            let p = DemographicProfile {
                caregiving_duration: known(Attribute::CaregivingDuration, raw),
                ..Default::default()
            };
            bin(&p, &scheme).get(Attribute::CaregivingDuration)[0].clone()
        };
        assert_eq!(label("11 months"), "less than 1 year");
        assert_eq!(label("1 year"), "1 to 5 years");
        assert_eq!(label("5 years"), "5 to 10 years");
        assert_eq!(label("10 years"), "10 to 20 years");
        assert_eq!(label("20 years"), "20 to 30 years");
    }

    #[test]
    fn out_of_range_goes_to_catch_all_with_warning() {
        let scheme = BinningScheme::shipped();
        let p = DemographicProfile {
            caregiver_age: known(Attribute::CaregiverAge, "9"),
            ..Default::default()
        };
        let b = bin(&p, &scheme);
        assert_eq!(b.get(Attribute::CaregiverAge), std::slice::from_ref(&scheme.catch_all));
        assert_eq!(b.warnings.len(), 1);
    }

    #[test]
    fn overlapping_bins_are_rejected() {
        let mut scheme = BinningScheme::shipped();
        scheme.caregiver_age[1].min = 20;
        assert!(scheme.validate().is_err());
    }

    #[test]
    fn known_rates_examples() {
        let gendered = DemographicProfile {
            caregiver_gender: known(Attribute::CaregiverGender, "female"),
            ..Default::default()
        };
        let mut profiles = vec![gendered; 98];
        profiles.extend(vec![DemographicProfile::default(); 384 - 98]);
        let r = known_rates(&profiles, &[Attribute::CaregiverGender]).unwrap();
        assert!((r.rows[0].known_pct - 25.520833).abs() < 1e-4);
        assert_eq!(r.rows[0].known_pct + r.rows[0].unknown_pct, 100.0);
        assert!(known_rates(&[], &Attribute::REPORTED).is_err());
        assert!((mean([25.3, 43.9, 25.3, 95.8, 32.7, 78.6]) - 50.266_666).abs() < 1e-5);
    }

    #[test]
    fn parse_profile_with_two_recipients() {
        let text = "I'm a 25 year old woman caring for my mother and my grandfather.";
        let f = |v: Option<&str>, q: &[&str]| json!({"value": v, "evidence": q.iter().map(|q| json!({"quote": q})).collect::<Vec<_>>()});
        let unknown = f(None, &[]);
        let patient = |rel: &str| {
            json!({
                "gender": unknown, "age": unknown, "diagnosis": unknown,
                "caregiver_relationship_to_patient": f(Some(if rel == "my mother" { "daughter" } else { "granddaughter" }), &[rel]),
                "patient_relationship_to_caregiver": unknown,
            })
        };
        let v = json!({
            "caregiver_gender": f(Some("female"), &["woman"]),
            "caregiver_age": f(Some("25"), &["25 year old"]),
            "caregiving_duration": unknown,
            "relationship_type": unknown,
            "patients": [patient("my mother"), patient("my grandfather")],
        });
        let p = parse_profile(text, &v).unwrap();
        assert_eq!(p.patients.len(), 2);
        assert_eq!(p.caregiver_age.label(), "25");
        assert_eq!(p.label(Attribute::CaregiverRelationshipToPatient), "daughter|granddaughter");
        assert!(p.check(text).is_empty());

        let mut bad = v.clone();
        bad["caregiver_age"] = f(Some("25"), &[]);
        bad["caregiving_duration"] = f(None, &["woman"]);
        let kinds: Vec<_> = parse_profile(text, &bad).unwrap_err().into_iter().map(|v| v.kind).collect();
        assert_eq!(kinds, vec![ViolationKind::EmptyEvidence, ViolationKind::UnexpectedEvidence]);
    }

    #[test]
    fn empty_profile_is_all_unknown() {
        let p = DemographicProfile::default();
        for a in Attribute::ALL {
            assert!(!p.is_known(a));
            assert_eq!(p.label(a), UNKNOWN);
        }
    }

    proptest! {
        #[test]
        fn age_bins_use_inclusive_upper_bounds(age in 0u32..200) {
            let scheme = BinningScheme::shipped();
            let p = DemographicProfile { caregiver_age: known(Attribute::CaregiverAge, &age.to_string()), ..Default::default() };
            let got = bin(&p, &scheme).get(Attribute::CaregiverAge)[0].clone();
            let expected = if (11..=80).contains(&age) {
                let lo = (age - 1) / 10 * 10 + 1;
                format!("{}–{}", lo, lo + 9)
            } else {
                scheme.catch_all.clone()
            };
            prop_assert_eq!(got, expected);
        }

        #[test]
        fn unknown_is_absorbing(n_patients in 0usize..4) {
            let p = DemographicProfile { patients: vec![PatientProfile::default(); n_patients], ..Default::default() };
            let b = bin(&p, &BinningScheme::shipped());
            for a in Attribute::ALL {
                prop_assert!(b.get(a).is_empty());
            }
        }
    }
}
