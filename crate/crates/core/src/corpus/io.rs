use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ArgumentSpan, Corpus, Document};
use crate::error::{Error, Result};

/// Reads a JSON-lines corpus, one document per line. Blank lines are skipped.
pub fn parse_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus_str(&text)
}

pub fn parse_corpus_str(text: &str) -> Result<Corpus> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
            line: idx + 1,
            message: e.to_string(),
        })?;
        doc.validate()?;
        if !seen.insert(doc.doc_id.clone()) {
            return Err(Error::DuplicateDocId(doc.doc_id));
        }
        docs.push(doc);
    }
    Ok(Corpus::from_valid(docs))
}

pub fn write_corpus(path: impl AsRef<Path>, docs: &[Document]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for doc in docs {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// An argument given as a half-open character range (in `char`s, not bytes).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
    pub role: String,
}

/// Whitespace-tokenizes `text` and converts character-offset spans to token
/// spans. A span covers every token whose characters intersect it.
pub fn from_char_offsets(
    doc_id: &str,
    title: &str,
    event_type: &str,
    text: &str,
    spans: &[CharSpan],
) -> Result<Document> {
    let mut tokens = Vec::new();
    let mut offsets = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    for (pos, ch) in text.chars().enumerate() {
        if ch.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
                offsets.push((start, pos));
            }
        } else {
            if current.is_empty() {
                start = pos;
            }
            current.push(ch);
        }
    }
    if !current.is_empty() {
        offsets.push((start, text.chars().count()));
        tokens.push(current);
    }

    let mut arguments = Vec::with_capacity(spans.len());
    for span in spans {
        let covered: Vec<usize> = offsets
            .iter()
            .enumerate()
            .filter(|(_, &(s, e))| s < span.end && span.start < e)
            .map(|(i, _)| i)
            .collect();
        match (covered.first(), covered.last()) {
            (Some(&first), Some(&last)) if span.start < span.end => {
                arguments.push(ArgumentSpan::new(first, last + 1, span.role.clone()));
            }
            _ => {
                return Err(Error::SpanOutOfBounds {
                    doc_id: doc_id.to_string(),
                    start: span.start,
                    end: span.end,
                    len: tokens.len(),
                })
            }
        }
    }

    let doc = Document {
        doc_id: doc_id.to_string(),
        title: title.to_string(),
        event_type: event_type.to_string(),
        tokens,
        arguments,
    };
    doc.validate()?;
    Ok(doc)
}
