//! Passage corpora, QA items and chunking.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{count_tokens, sentence_spans, sha256_hex, token_spans};

pub const DEFAULT_MAX_CHUNK_TOKENS: usize = 512;
pub const MIN_CHUNK_TOKENS: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub seq: usize,
    pub text: String,
    pub token_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAItem {
    pub question_id: String,
    pub question: String,
    pub gold_answers: Vec<String>,
    #[serde(default)]
    pub supporting_doc_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    JsonlPassages,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl-passages" => Ok(CorpusFormat::JsonlPassages),
            other => Err(Error::Config(format!("unknown corpus format `{other}`"))),
        }
    }
}

/// On-disk passage record.
#[derive(Debug, Serialize, Deserialize)]
struct PassageRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    #[serde(default)]
    title: String,
    text: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct QaRecord {
    id: String,
    question: String,
    answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    supporting_ids: Option<Vec<String>>,
}

pub fn content_doc_id(title: &str, text: &str) -> String {
    sha256_hex(&[title.as_bytes(), text.as_bytes()])[..16].to_string()
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<Document>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&raw, &path.display().to_string(), format)
}

/// Parse corpus records. Explicit ids must be unique; documents without an
/// id get a content hash, suffixed `#n` when identical passages repeat.
pub fn parse_corpus(raw: &str, source_name: &str, format: CorpusFormat) -> Result<Vec<Document>> {
    let CorpusFormat::JsonlPassages = format;
    let mut docs = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut hash_uses: HashMap<String, usize> = HashMap::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: PassageRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if rec.text.trim().is_empty() {
            return Err(Error::Validation(format!(
                "{source_name} line {}: empty passage text",
                i + 1
            )));
        }
        let doc_id = match rec.id {
            Some(id) => {
                if seen.contains(&id) {
                    return Err(Error::Validation(format!(
                        "{source_name} line {}: duplicate doc_id `{id}`",
                        i + 1
                    )));
                }
                id
            }
            None => {
                let base = content_doc_id(&rec.title, &rec.text);
                let n = hash_uses.entry(base.clone()).or_insert(0);
                *n += 1;
                if *n == 1 {
                    base
                } else {
                    format!("{base}#{}", *n - 1)
                }
            }
        };
        if !seen.insert(doc_id.clone()) {
            return Err(Error::Validation(format!(
                "{source_name} line {}: duplicate doc_id `{doc_id}`",
                i + 1
            )));
        }
        docs.push(Document {
            doc_id,
            title: rec.title,
            text: rec.text,
        });
    }
    Ok(docs)
}

/// Serialize documents back to `jsonl-passages`, always writing ids.
pub fn corpus_to_jsonl(docs: &[Document]) -> Result<String> {
    let records: Vec<PassageRecord> = docs
        .iter()
        .map(|d| PassageRecord {
            id: Some(d.doc_id.clone()),
            title: d.title.clone(),
            text: d.text.clone(),
        })
        .collect();
    crate::jsonl::to_jsonl(&records)
}

pub fn write_corpus(path: &Path, docs: &[Document]) -> Result<()> {
    crate::jsonl::write_atomic(path, corpus_to_jsonl(docs)?.as_bytes())
}

pub fn load_qa(path: &Path) -> Result<Vec<QAItem>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_qa(&raw, &path.display().to_string())
}

pub fn parse_qa(raw: &str, source_name: &str) -> Result<Vec<QAItem>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: QaRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if rec.answers.is_empty() {
            return Err(Error::Validation(format!(
                "{source_name} line {}: question `{}` has no gold answers",
                i + 1,
                rec.id
            )));
        }
        if !seen.insert(rec.id.clone()) {
            return Err(Error::Validation(format!(
                "{source_name} line {}: duplicate question id `{}`",
                i + 1,
                rec.id
            )));
        }
        out.push(QAItem {
            question_id: rec.id,
            question: rec.question,
            gold_answers: rec.answers,
            supporting_doc_ids: rec.supporting_ids.unwrap_or_default(),
        });
    }
    Ok(out)
}

pub fn qa_to_jsonl(items: &[QAItem]) -> Result<String> {
    let records: Vec<QaRecord> = items
        .iter()
        .map(|q| QaRecord {
            id: q.question_id.clone(),
            question: q.question.clone(),
            answers: q.gold_answers.clone(),
            supporting_ids: (!q.supporting_doc_ids.is_empty()).then(|| q.supporting_doc_ids.clone()),
        })
        .collect();
    crate::jsonl::to_jsonl(&records)
}

/// Check that every supporting id names a corpus document.
pub fn validate_qa(items: &[QAItem], docs: &[Document]) -> Result<()> {
    let ids: BTreeSet<&str> = docs.iter().map(|d| d.doc_id.as_str()).collect();
    for q in items {
        if let Some(missing) = q
            .supporting_doc_ids
            .iter()
            .find(|id| !ids.contains(id.as_str()))
        {
            return Err(Error::Validation(format!(
                "question `{}` references unknown doc `{missing}`",
                q.question_id
            )));
        }
    }
    Ok(())
}

pub fn chunk_id(doc_id: &str, seq: usize) -> String {
    format!("{doc_id}::{seq}")
}

/// Split a document into chunks of at most `max_tokens` tokens.
///
/// Sentences are packed greedily; a sentence is only cut when it alone
/// exceeds the budget, and then at token boundaries.
pub fn chunk_document(doc: &Document, max_tokens: usize) -> Result<Vec<Chunk>> {
    if max_tokens < MIN_CHUNK_TOKENS {
        return Err(Error::Precondition(format!(
            "max_tokens must be >= {MIN_CHUNK_TOKENS}, got {max_tokens}"
        )));
    }
    let text = doc.text.as_str();
    let mut pieces: Vec<(usize, usize, usize)> = Vec::new();
    for s in sentence_spans(text) {
        let toks = token_spans(&text[s.clone()]);
        if toks.len() <= max_tokens {
            pieces.push((s.start, s.end, toks.len()));
            continue;
        }
        for window in toks.chunks(max_tokens) {
            let start = s.start + window[0].start;
            let end = s.start + window[window.len() - 1].end;
            pieces.push((start, end, window.len()));
        }
    }

    let mut ranges: Vec<(usize, usize)> = Vec::new();
    let mut current: Option<(usize, usize, usize)> = None;
    for (start, end, n) in pieces {
        current = match current {
            Some((cs, _, cn)) if cn + n <= max_tokens => Some((cs, end, cn + n)),
            Some((cs, ce, _)) => {
                ranges.push((cs, ce));
                Some((start, end, n))
            }
            None => Some((start, end, n)),
        };
    }
    if let Some((cs, ce, _)) = current {
        ranges.push((cs, ce));
    }

    Ok(ranges
        .into_iter()
        .enumerate()
        .map(|(seq, (s, e))| {
            let t = &text[s..e];
            Chunk {
                chunk_id: chunk_id(&doc.doc_id, seq),
                doc_id: doc.doc_id.clone(),
                seq,
                text: t.to_string(),
                token_count: count_tokens(t),
            }
        })
        .collect())
}

pub fn chunk_corpus(docs: &[Document], max_tokens: usize) -> Result<Vec<Chunk>> {
    let mut out = Vec::new();
    for d in docs {
        out.extend(chunk_document(d, max_tokens)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::sentence_spans;

    fn doc(text: &str) -> Document {
        Document {
            doc_id: "d".into(),
            title: "t".into(),
            text: text.into(),
        }
    }

    #[test]
    fn two_records_in_order() {
        let raw = "{\"id\":\"b\",\"title\":\"B\",\"text\":\"Second.\"}\n{\"id\":\"a\",\"title\":\"A\",\"text\":\"First.\"}\n";
        let docs = parse_corpus(raw, "mem", CorpusFormat::JsonlPassages).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].doc_id, "b");
        assert_eq!(docs[1].doc_id, "a");
    }

    #[test]
    fn empty_file() {
        assert!(parse_corpus("", "mem", CorpusFormat::JsonlPassages)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn malformed_line_is_named() {
        let raw = "{\"title\":\"A\",\"text\":\"x\"}\n{not json\n";
        match parse_corpus(raw, "mem", CorpusFormat::JsonlPassages) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let raw = "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}\n";
        assert!(matches!(
            parse_corpus(raw, "mem", CorpusFormat::JsonlPassages),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn hashed_ids_are_stable_and_unique() {
        let raw = "{\"title\":\"A\",\"text\":\"x\"}\n{\"title\":\"A\",\"text\":\"x\"}\n";
        let a = parse_corpus(raw, "mem", CorpusFormat::JsonlPassages).unwrap();
        let b = parse_corpus(raw, "mem", CorpusFormat::JsonlPassages).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].doc_id, a[1].doc_id);
        assert_eq!(a[0].doc_id, content_doc_id("A", "x"));
    }

    #[test]
    fn qa_requires_answers() {
        let raw = "{\"id\":\"q\",\"question\":\"?\",\"answers\":[]}\n";
        assert!(parse_qa(raw, "mem").is_err());
        let raw = "{\"id\":\"q\",\"question\":\"?\",\"answers\":[\"x\"],\"supporting_ids\":[\"zz\"]}\n";
        let qa = parse_qa(raw, "mem").unwrap();
        assert!(validate_qa(&qa, &[doc("a")]).is_err());
    }

    #[test]
    fn single_sentence_one_chunk() {
        let d = doc("Francis Bacon was born in London.");
        let c = chunk_document(&d, 512).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].text, d.text);
        assert_eq!(c[0].chunk_id, "d::0");
    }

    #[test]
    fn small_budget_rejected() {
        assert!(matches!(
            chunk_document(&doc("x"), 31),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn splits_only_at_sentence_boundaries() {
        let sentence = "Word".to_string() + &" word".repeat(9) + ".";
        let text = vec![sentence; 9].join(" ");
        let d = doc(&text);
        let chunks = chunk_document(&d, 40).unwrap();
        assert!(chunks.len() >= 2);
        // brute force: every chunk boundary must coincide with a sentence boundary
        let bounds: BTreeSet<usize> = sentence_spans(&text)
            .into_iter()
            .flat_map(|r| [r.start, r.end])
            .collect();
        let mut cursor = 0;
        for c in &chunks {
            let start = text[cursor..].find(&c.text).unwrap() + cursor;
            let end = start + c.text.len();
            assert!(bounds.contains(&start) && bounds.contains(&end));
            assert!(c.token_count <= 40);
            cursor = end;
        }
    }

    #[test]
    fn oversized_sentence_is_cut() {
        let text = "tok ".repeat(100);
        let chunks = chunk_document(&doc(text.trim()), 32).unwrap();
        assert_eq!(chunks.len(), 4);
        assert!(chunks.iter().all(|c| c.token_count <= 32));
        let seqs: Vec<_> = chunks.iter().map(|c| c.seq).collect();
        assert_eq!(seqs, [0, 1, 2, 3]);
    }
}
