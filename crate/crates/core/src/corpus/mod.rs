//! Annotated document corpora: data model, JSON-lines I/O, statistics,
//! domain splits, leakage masking and rare-type filtering.

mod filter;
mod io;
mod split;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use filter::{filter_rare_types, filter_split};
pub use io::{from_char_offsets, parse_corpus, parse_corpus_str, write_corpus, CharSpan};
pub use split::{
    apply_leakage_mask, compute_split, MaskingReport, SplitCorpus, SplitKind, SplitSpec,
    CROSS_DOMAIN_TARGETS, FREQUENT_ROLES,
};

/// One argument span: half-open token range `[start, end)` filling `role`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArgumentSpan {
    pub start: usize,
    pub end: usize,
    pub role: String,
}

impl ArgumentSpan {
    pub fn new(start: usize, end: usize, role: impl Into<String>) -> Self {
        Self {
            start,
            end,
            role: role.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A tokenized article with its single main event and gold argument spans.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    #[serde(default)]
    pub title: String,
    pub event_type: String,
    pub tokens: Vec<String>,
    #[serde(default)]
    pub arguments: Vec<ArgumentSpan>,
}

impl Document {
    /// Checks token and span invariants. Malformed spans are rejected, never repaired.
    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::EmptyDocument(self.doc_id.clone()));
        }
        let len = self.tokens.len();
        for span in &self.arguments {
            if span.start >= span.end || span.end > len {
                return Err(Error::SpanOutOfBounds {
                    doc_id: self.doc_id.clone(),
                    start: span.start,
                    end: span.end,
                    len,
                });
            }
        }
        let mut sorted: Vec<&ArgumentSpan> = self.arguments.iter().collect();
        sorted.sort_by_key(|s| (s.start, s.end));
        for pair in sorted.windows(2) {
            if pair[1].start < pair[0].end {
                return Err(Error::OverlappingSpans {
                    doc_id: self.doc_id.clone(),
                    first_start: pair[0].start,
                    first_end: pair[0].end,
                    second_start: pair[1].start,
                    second_end: pair[1].end,
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Distinct roles annotated in this document.
    pub fn roles(&self) -> BTreeSet<&str> {
        self.arguments.iter().map(|a| a.role.as_str()).collect()
    }

    /// Copy of this document keeping only spans whose role satisfies `keep`.
    pub fn retain_roles(&self, keep: impl Fn(&str) -> bool) -> Document {
        Document {
            arguments: self
                .arguments
                .iter()
                .filter(|a| keep(&a.role))
                .cloned()
                .collect(),
            ..self.clone()
        }
    }
}

/// An ordered, validated collection of documents with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    docs: Vec<Document>,
}

impl Corpus {
    pub fn new(docs: Vec<Document>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(docs.len());
        for doc in &docs {
            doc.validate()?;
            if !seen.insert(doc.doc_id.as_str()) {
                return Err(Error::DuplicateDocId(doc.doc_id.clone()));
            }
        }
        Ok(Self { docs })
    }

    /// Builds from documents already known to be valid (e.g. filtered copies of a corpus).
    pub(crate) fn from_valid(docs: Vec<Document>) -> Self {
        Self { docs }
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn into_docs(self) -> Vec<Document> {
        self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Document> {
        self.docs.iter()
    }

    pub fn event_types(&self) -> BTreeSet<&str> {
        self.docs.iter().map(|d| d.event_type.as_str()).collect()
    }

    pub fn arg_types(&self) -> BTreeSet<&str> {
        self.docs
            .iter()
            .flat_map(|d| d.arguments.iter().map(|a| a.role.as_str()))
            .collect()
    }

    /// Number of annotated spans per role.
    pub fn role_counts(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for arg in self.docs.iter().flat_map(|d| d.arguments.iter()) {
            *counts.entry(arg.role.as_str()).or_insert(0) += 1;
        }
        counts
    }

    pub fn stats(&self) -> CorpusStats {
        corpus_stats(self)
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Document;
    type IntoIter = std::slice::Iter<'a, Document>;

    fn into_iter(self) -> Self::IntoIter {
        self.docs.iter()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub num_docs: usize,
    pub num_event_types: usize,
    pub num_arg_types: usize,
    pub tokens_per_doc: f64,
    pub arg_instances: usize,
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let num_docs = corpus.len();
    let total_tokens: usize = corpus.iter().map(Document::len).sum();
    CorpusStats {
        num_docs,
        num_event_types: corpus.event_types().len(),
        num_arg_types: corpus.arg_types().len(),
        tokens_per_doc: if num_docs == 0 {
            0.0
        } else {
            total_tokens as f64 / num_docs as f64
        },
        arg_instances: corpus.iter().map(|d| d.arguments.len()).sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, event: &str, tokens: &[&str], args: &[(usize, usize, &str)]) -> Document {
        Document {
            doc_id: id.into(),
            title: String::new(),
            event_type: event.into(),
            tokens: tokens.iter().map(|t| t.to_string()).collect(),
            arguments: args
                .iter()
                .map(|&(s, e, r)| ArgumentSpan::new(s, e, r))
                .collect(),
        }
    }

    #[test]
    fn rejects_out_of_bounds_span() {
        let d = doc("x", "E", &["a", "b"], &[(0, 3, "R")]);
        let err = d.validate().unwrap_err();
        assert!(err.to_string().contains("span out of bounds"), "{err}");
    }

    #[test]
    fn rejects_empty_and_inverted_spans() {
        assert!(doc("x", "E", &["a", "b"], &[(1, 1, "R")])
            .validate()
            .is_err());
        assert!(doc("x", "E", &["a", "b"], &[(2, 1, "R")])
            .validate()
            .is_err());
        assert!(doc("x", "E", &[], &[]).validate().is_err());
    }

    #[test]
    fn rejects_overlap_but_accepts_adjacent() {
        let overlapping = doc("x", "E", &["a", "b", "c"], &[(0, 2, "R"), (1, 3, "S")]);
        assert!(matches!(
            overlapping.validate(),
            Err(Error::OverlappingSpans { .. })
        ));
        let adjacent = doc("x", "E", &["a", "b", "c"], &[(0, 1, "R"), (1, 3, "S")]);
        adjacent.validate().unwrap();
    }

    #[test]
    fn rejects_duplicate_ids() {
        let a = doc("x", "E", &["a"], &[]);
        assert!(matches!(
            Corpus::new(vec![a.clone(), a]),
            Err(Error::DuplicateDocId(_))
        ));
    }

    #[test]
    fn stats_of_empty_corpus_are_zero() {
        assert_eq!(Corpus::default().stats(), CorpusStats::default());
    }

    #[test]
    fn stats_match_hand_count() {
        let corpus = Corpus::new(vec![
            doc(
                "1",
                "Flood",
                &["a", "b", "c", "d"],
                &[(0, 1, "Date"), (2, 4, "Area")],
            ),
            doc("2", "Flood", &["a", "b"], &[(1, 2, "Date")]),
            doc("3", "Fire", &["a", "b", "c"], &[(0, 2, "Cause")]),
        ])
        .unwrap();
        let stats = corpus.stats();
        assert_eq!(stats.num_docs, 3);
        assert_eq!(stats.num_event_types, 2);
        assert_eq!(stats.num_arg_types, 3);
        assert_eq!(stats.arg_instances, 4);
        assert!((stats.tokens_per_doc - 3.0).abs() < 1e-12);
    }
}
