//! Verbatim evidence spans and the violation vocabulary shared by every
//! validator (model outputs and human submissions go through the same checks).

use std::fmt;

use serde::{Deserialize, Serialize};

/// A quoted span of the analyzed post text, addressed by character
/// (Unicode scalar) offsets, `start` inclusive and `end` exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EvidenceSpan {
    pub start: usize,
    pub end: usize,
    pub quote: String,
}

/// Evidence as a producer emits it: the quote is mandatory, offsets are
/// optional and get resolved against the text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawEvidence {
    pub quote: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<usize>,
}

impl From<&EvidenceSpan> for RawEvidence {
    fn from(span: &EvidenceSpan) -> Self {
        RawEvidence {
            quote: span.quote.clone(),
            start: Some(span.start),
            end: Some(span.end),
        }
    }
}

impl EvidenceSpan {
    /// Finds the first occurrence of `quote` in `text`.
    pub fn locate(text: &str, quote: &str) -> Option<EvidenceSpan> {
        if quote.is_empty() {
            return None;
        }
        let byte = text.find(quote)?;
        let start = text[..byte].chars().count();
        Some(EvidenceSpan {
            start,
            end: start + quote.chars().count(),
            quote: quote.to_string(),
        })
    }

    /// Turns producer evidence into a checked span. Offsets, when given, must
    /// agree with the quote.
    pub fn resolve(text: &str, raw: &RawEvidence) -> Result<EvidenceSpan, ViolationKind> {
        if raw.quote.is_empty() {
            return Err(ViolationKind::EmptyEvidence);
        }
        match raw.start {
            Some(start) => {
                let end = raw.end.unwrap_or(start + raw.quote.chars().count());
                let span = EvidenceSpan {
                    start,
                    end,
                    quote: raw.quote.clone(),
                };
                span.check(text)?;
                Ok(span)
            }
            None => EvidenceSpan::locate(text, &raw.quote).ok_or(ViolationKind::NotASubstring),
        }
    }

    /// Verifies the span against `text`.
    pub fn check(&self, text: &str) -> Result<(), ViolationKind> {
        if self.quote.is_empty() || self.start >= self.end {
            return Err(ViolationKind::EmptyEvidence);
        }
        match char_slice(text, self.start, self.end) {
            Some(slice) if slice == self.quote => Ok(()),
            Some(_) if text.contains(self.quote.as_str()) => Err(ViolationKind::OffsetMismatch),
            Some(_) => Err(ViolationKind::NotASubstring),
            None if text.contains(self.quote.as_str()) => Err(ViolationKind::OffsetMismatch),
            None => Err(ViolationKind::NotASubstring),
        }
    }

    pub fn overlaps(&self, other: &EvidenceSpan) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Returns the substring between two character offsets, or `None` when the
/// range falls outside the text.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut indices = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len()));
    let begin = indices.nth(start)?;
    let finish = if end == start {
        begin
    } else {
        indices.nth(end - start - 1)?
    };
    Some(&text[begin..finish])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    NotASubstring,
    OffsetMismatch,
    EmptyEvidence,
    UnexpectedEvidence,
    EvidenceReuse,
    DuplicateCause,
    DuplicateItem,
    MissingItem,
    UnknownItem,
    Schema,
    Malformed,
}

impl ViolationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViolationKind::NotASubstring => "not a substring",
            ViolationKind::OffsetMismatch => "offset mismatch",
            ViolationKind::EmptyEvidence => "empty evidence",
            ViolationKind::UnexpectedEvidence => "unexpected evidence",
            ViolationKind::EvidenceReuse => "evidence reuse",
            ViolationKind::DuplicateCause => "duplicate cause",
            ViolationKind::DuplicateItem => "duplicate item",
            ViolationKind::MissingItem => "missing item",
            ViolationKind::UnknownItem => "unknown item",
            ViolationKind::Schema => "schema",
            ViolationKind::Malformed => "malformed json",
        }
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One named invariant failure, with a JSON-pointer-ish path to the field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub path: String,
    pub message: String,
}

impl Violation {
    pub fn new(kind: ViolationKind, path: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            kind,
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.message.is_empty() {
            write!(f, "{}: {}", self.path, self.kind)
        } else {
            write!(f, "{}: {} ({})", self.path, self.kind, self.message)
        }
    }
}

/// Resolves a list of raw evidence against `text`, pushing a violation for
/// every span that fails.
pub(crate) fn resolve_all(
    text: &str,
    raw: &[RawEvidence],
    path: &str,
    violations: &mut Vec<Violation>,
) -> Vec<EvidenceSpan> {
    let mut spans = Vec::with_capacity(raw.len());
    for (i, ev) in raw.iter().enumerate() {
        match EvidenceSpan::resolve(text, ev) {
            Ok(span) => spans.push(span),
            Err(kind) => violations.push(Violation::new(
                kind,
                format!("{path}/evidence/{i}"),
                truncate(&ev.quote, 60),
            )),
        }
    }
    spans
}

/// Deserializes a model or human payload, reporting shape errors as a
/// schema violation.
pub(crate) fn from_value<T: serde::de::DeserializeOwned>(value: &serde_json::Value) -> Result<T, Vec<Violation>> {
    serde_json::from_value(value.clone()).map_err(|e| vec![Violation::new(ViolationKind::Schema, "/", e.to_string())])
}

/// Re-checks already resolved spans against `text`.
pub(crate) fn check_all(text: &str, spans: &[EvidenceSpan], path: &str, violations: &mut Vec<Violation>) {
    for (i, span) in spans.iter().enumerate() {
        if let Err(kind) = span.check(text) {
            violations.push(Violation::new(kind, format!("{path}/evidence/{i}"), truncate(&span.quote, 60)));
        }
    }
}

pub(crate) fn truncate(s: &str, max: usize) -> String {
    if s.chars().count() <= max {
        s.to_string()
    } else {
        let mut out: String = s.chars().take(max).collect();
        out.push('…');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn locate_uses_char_offsets() {
        let text = "héllo wörld, I feel alone";
        let span = EvidenceSpan::locate(text, "I feel alone").unwrap();
        assert_eq!(span.start, 13);
        assert_eq!(char_slice(text, span.start, span.end), Some("I feel alone"));
        span.check(text).unwrap();
    }

    #[test]
    fn check_reports_fabricated_and_shifted_quotes() {
        let text = "nobody visits anymore";
        let fake = EvidenceSpan {
            start: 0,
            end: 5,
            quote: "everybody".into(),
        };
        assert_eq!(fake.check(text), Err(ViolationKind::NotASubstring));
        let shifted = EvidenceSpan {
            start: 1,
            end: 7,
            quote: "nobody".into(),
        };
        assert_eq!(shifted.check(text), Err(ViolationKind::OffsetMismatch));
        let past_end = EvidenceSpan {
            start: 50,
            end: 56,
            quote: "nobody".into(),
        };
        assert_eq!(past_end.check(text), Err(ViolationKind::OffsetMismatch));
    }

    #[test]
    fn resolve_without_offsets_finds_first_occurrence() {
        let raw = RawEvidence {
            quote: "alone".into(),
            start: None,
            end: None,
        };
        let span = EvidenceSpan::resolve("alone and alone", &raw).unwrap();
        assert_eq!((span.start, span.end), (0, 5));
        let empty = RawEvidence {
            quote: String::new(),
            start: None,
            end: None,
        };
        assert_eq!(
            EvidenceSpan::resolve("x", &empty),
            Err(ViolationKind::EmptyEvidence)
        );
    }

    #[test]
    fn char_slice_bounds() {
        assert_eq!(char_slice("abc", 0, 3), Some("abc"));
        assert_eq!(char_slice("abc", 3, 3), Some(""));
        assert_eq!(char_slice("abc", 2, 4), None);
        assert_eq!(char_slice("añb", 1, 2), Some("ñ"));
    }
}
