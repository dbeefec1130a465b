//! Entity and proposition extraction through the rewrite → entities →
//! facts prompt chain.
//!
//! Failures on individual chunks degrade rather than abort: a failed
//! rewrite falls back to the original text, and an unparseable extraction
//! yields an empty list. Every degradation is reported to the caller.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{Chunk, Document};
use crate::error::{Error, Result};
use crate::gateway::prompts::PROMPT_VERSION;
use crate::gateway::{parse_structured, ExpectedOutput, Gateway, PromptName};
use crate::jsonl::{read_jsonl, write_jsonl};
use crate::text::{contains_phrase, normalize_key, sha256_hex, word_tokens};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub canonical_name: String,
    pub entity_type: String,
    pub entity_key: String,
}

impl Entity {
    pub fn new(name: &str, entity_type: &str) -> Option<Self> {
        let key = normalize_key(name);
        (!key.is_empty()).then(|| Entity {
            canonical_name: name.trim().to_string(),
            entity_type: entity_type.trim().to_string(),
            entity_key: key,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposition {
    pub prop_id: String,
    pub chunk_id: String,
    pub doc_id: String,
    /// Position of the source document in the corpus.
    pub doc_rank: usize,
    pub seq_in_doc: usize,
    pub text: String,
    pub entity_keys: Vec<String>,
}

/// A fact as returned by the model, before provenance is attached.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedFact {
    pub text: String,
    pub entity_keys: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Degradation {
    pub chunk_id: String,
    pub stage: String,
    pub message: String,
}

/// A value plus an optional note that it was produced by a fallback path.
#[derive(Debug, Clone, PartialEq)]
pub struct Degraded<T> {
    pub value: T,
    pub degradation: Option<String>,
}

impl<T> Degraded<T> {
    fn ok(value: T) -> Self {
        Degraded {
            value,
            degradation: None,
        }
    }

    fn fallback(value: T, why: impl Into<String>) -> Self {
        Degraded {
            value,
            degradation: Some(why.into()),
        }
    }
}

/// Resolve entity coreferences in `chunk` given the preceding chunk of the
/// same document. Gateway failures return the original text.
pub fn rewrite_chunk(gw: &Gateway, chunk: &Chunk, prev: Option<&Chunk>) -> Degraded<String> {
    let previous = prev.map_or("", |c| c.text.as_str());
    match gw.prompt(
        PromptName::Rewrite,
        &[("previous_paragraph", previous), ("paragraph", &chunk.text)],
        None,
    ) {
        Ok(r) => Degraded::ok(r.text.trim().to_string()),
        Err(e) => {
            tracing::warn!(chunk = %chunk.chunk_id, error = %e, "rewrite failed, using original text");
            Degraded::fallback(chunk.text.clone(), format!("rewrite: {e}"))
        }
    }
}

/// Entities from a parsed entity-extraction object, deduplicated by key.
pub fn parse_entities(value: &Value) -> Vec<Entity> {
    let mut out: Vec<Entity> = Vec::new();
    let Some(obj) = value.as_object() else {
        return out;
    };
    for rec in obj.values() {
        let Some(name) = rec.get("name").and_then(Value::as_str) else {
            continue;
        };
        let ty = rec.get("type").and_then(Value::as_str).unwrap_or("");
        if let Some(e) = Entity::new(name, ty) {
            if !out.iter().any(|x| x.entity_key == e.entity_key) {
                out.push(e);
            }
        }
    }
    out
}

pub fn extract_entities(gw: &Gateway, rewritten: &str) -> Result<Degraded<Vec<Entity>>> {
    if rewritten.trim().is_empty() {
        return Err(Error::Precondition("entity extraction on empty text".into()));
    }
    let resp = match gw.prompt(PromptName::EntityExtract, &[("paragraph", rewritten)], None) {
        Ok(r) => r,
        Err(e) => return Ok(Degraded::fallback(Vec::new(), format!("entities: {e}"))),
    };
    match parse_structured(&resp.text, ExpectedOutput::JsonObject) {
        Ok(v) => Ok(Degraded::ok(parse_entities(&v))),
        Err(e) => Ok(Degraded::fallback(Vec::new(), format!("entities: {e}"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawFact {
    pub fact: String,
    pub triplets: Vec<Vec<String>>,
}

/// Fact records from a parsed proposition-extraction object. Empty
/// records and records without a fact string are skipped.
pub fn parse_facts(value: &Value) -> Vec<RawFact> {
    let Some(obj) = value.as_object() else {
        return Vec::new();
    };
    obj.values()
        .filter_map(|rec| {
            let fact = rec.get("fact")?.as_str()?.trim();
            if fact.is_empty() {
                return None;
            }
            let triplets = rec
                .get("triplets")
                .and_then(Value::as_array)
                .map(|ts| {
                    ts.iter()
                        .filter_map(Value::as_array)
                        .map(|t| {
                            t.iter()
                                .filter_map(Value::as_str)
                                .map(str::to_string)
                                .collect()
                        })
                        .collect()
                })
                .unwrap_or_default();
            Some(RawFact {
                fact: fact.to_string(),
                triplets,
            })
        })
        .collect()
}

/// Resolve a fact's entity keys: listed entities mentioned in the fact text
/// or named in its triplets (exact key match), followed by triplet heads
/// and tails absent from the list. The latter are returned as new entities.
pub fn resolve_fact_entities(fact: &RawFact, listed: &[Entity]) -> (Vec<String>, Vec<Entity>) {
    let fact_tokens = word_tokens(&fact.fact);
    let mut triplet_keys: Vec<(String, String)> = Vec::new();
    for t in &fact.triplets {
        if t.len() < 3 {
            continue;
        }
        for name in [&t[0], &t[t.len() - 1]] {
            let key = normalize_key(name);
            if !key.is_empty() && !triplet_keys.iter().any(|(k, _)| *k == key) {
                triplet_keys.push((key, name.trim().to_string()));
            }
        }
    }
    let mut keys: Vec<String> = Vec::new();
    for e in listed {
        let named = triplet_keys.iter().any(|(k, _)| *k == e.entity_key);
        let mentioned = contains_phrase(&fact_tokens, &word_tokens(&e.canonical_name));
        if (named || mentioned) && !keys.contains(&e.entity_key) {
            keys.push(e.entity_key.clone());
        }
    }
    let mut added = Vec::new();
    for (key, name) in triplet_keys {
        if !keys.contains(&key) {
            keys.push(key);
            added.extend(Entity::new(&name, "triplet"));
        }
    }
    (keys, added)
}

pub struct PropositionExtraction {
    pub facts: Vec<ExtractedFact>,
    pub triplet_entities: Vec<Entity>,
}

pub fn extract_propositions(
    gw: &Gateway,
    rewritten: &str,
    entities: &[Entity],
) -> Result<Degraded<PropositionExtraction>> {
    if rewritten.trim().is_empty() {
        return Err(Error::Precondition(
            "proposition extraction on empty text".into(),
        ));
    }
    let names = entities
        .iter()
        .map(|e| e.canonical_name.as_str())
        .collect::<Vec<_>>()
        .join(", ");
    let empty = || PropositionExtraction {
        facts: Vec::new(),
        triplet_entities: Vec::new(),
    };
    let resp = match gw.prompt(
        PromptName::PropositionExtract,
        &[("paragraph", rewritten), ("entities", &names)],
        None,
    ) {
        Ok(r) => r,
        Err(e) => return Ok(Degraded::fallback(empty(), format!("propositions: {e}"))),
    };
    let value = match parse_structured(&resp.text, ExpectedOutput::JsonObject) {
        Ok(v) => v,
        Err(e) => return Ok(Degraded::fallback(empty(), format!("propositions: {e}"))),
    };
    let mut out = empty();
    for raw in parse_facts(&value) {
        let (keys, added) = resolve_fact_entities(&raw, entities);
        for e in added {
            if !out.triplet_entities.iter().any(|x| x.entity_key == e.entity_key) {
                out.triplet_entities.push(e);
            }
        }
        out.facts.push(ExtractedFact {
            text: raw.fact,
            entity_keys: keys,
        });
    }
    Ok(Degraded::ok(out))
}

pub fn filter_entityless(props: Vec<Proposition>) -> Vec<Proposition> {
    props
        .into_iter()
        .filter(|p| !p.entity_keys.is_empty())
        .collect()
}

/// Per-chunk extraction artifacts, persisted so rebuilds can skip the
/// prompt chain for unchanged chunks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkEntities {
    pub chunk_id: String,
    pub fingerprint: String,
    pub entities: Vec<Entity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkPropositions {
    pub chunk_id: String,
    pub fingerprint: String,
    pub propositions: Vec<ExtractedFact>,
    #[serde(default)]
    pub degradations: Vec<Degradation>,
}

#[derive(Debug, Clone, Default)]
pub struct ExtractionOutput {
    pub chunk_entities: Vec<ChunkEntities>,
    pub chunk_propositions: Vec<ChunkPropositions>,
    /// All propositions in (document, chunk) order, entity-less ones included.
    pub propositions: Vec<Proposition>,
    pub degradations: Vec<Degradation>,
    pub reused_chunks: usize,
}

impl ExtractionOutput {
    /// Distinct entities across all chunks, in first-seen order.
    pub fn entities(&self) -> Vec<Entity> {
        let mut seen = HashMap::new();
        let mut out = Vec::new();
        for ce in &self.chunk_entities {
            for e in &ce.entities {
                if seen.insert(e.entity_key.clone(), ()).is_none() {
                    out.push(e.clone());
                }
            }
        }
        out
    }
}

fn fingerprint(gw: &Gateway, chunk: &Chunk, prev: Option<&Chunk>) -> String {
    sha256_hex(&[
        PROMPT_VERSION.as_bytes(),
        gw.settings().chat_model.as_bytes(),
        chunk.text.as_bytes(),
        prev.map_or(&b""[..], |c| c.text.as_bytes()),
    ])
}

fn extract_chunk(
    gw: &Gateway,
    chunk: &Chunk,
    prev: Option<&Chunk>,
    fp: String,
) -> Result<(ChunkEntities, ChunkPropositions)> {
    let mut degradations = Vec::new();
    let mut note = |stage: &str, d: Option<String>| {
        if let Some(message) = d {
            degradations.push(Degradation {
                chunk_id: chunk.chunk_id.clone(),
                stage: stage.to_string(),
                message,
            });
        }
    };
    let rewritten = rewrite_chunk(gw, chunk, prev);
    note("rewrite", rewritten.degradation);
    let text = if rewritten.value.trim().is_empty() {
        chunk.text.clone()
    } else {
        rewritten.value
    };
    let ents = extract_entities(gw, &text)?;
    note("entities", ents.degradation);
    let props = extract_propositions(gw, &text, &ents.value)?;
    note("propositions", props.degradation);
    let mut entities = ents.value;
    for e in props.value.triplet_entities {
        if !entities.iter().any(|x| x.entity_key == e.entity_key) {
            entities.push(e);
        }
    }
    Ok((
        ChunkEntities {
            chunk_id: chunk.chunk_id.clone(),
            fingerprint: fp.clone(),
            entities,
        },
        ChunkPropositions {
            chunk_id: chunk.chunk_id.clone(),
            fingerprint: fp,
            propositions: props.value.facts,
            degradations,
        },
    ))
}

/// Run the extraction chain over every chunk.
///
/// Chunks are processed in parallel; results are merged in corpus order and
/// `seq_in_doc` is assigned along that order. `previous` artifacts whose
/// fingerprints still match are reused without calling the gateway.
pub fn extract_corpus(
    gw: &Gateway,
    docs: &[Document],
    chunks: &[Chunk],
    previous: Option<(&[ChunkEntities], &[ChunkPropositions])>,
) -> Result<ExtractionOutput> {
    let rank: HashMap<&str, usize> = docs
        .iter()
        .enumerate()
        .map(|(i, d)| (d.doc_id.as_str(), i))
        .collect();
    let mut ordered: Vec<&Chunk> = chunks.iter().collect();
    ordered.sort_by_key(|c| (rank.get(c.doc_id.as_str()).copied().unwrap_or(usize::MAX), c.seq));

    let mut prev_of: Vec<Option<&Chunk>> = Vec::with_capacity(ordered.len());
    for (i, c) in ordered.iter().enumerate() {
        let prev = (i > 0 && ordered[i - 1].doc_id == c.doc_id).then(|| ordered[i - 1]);
        prev_of.push(prev);
    }

    let mut cached: BTreeMap<&str, (&ChunkEntities, &ChunkPropositions)> = BTreeMap::new();
    if let Some((ents, props)) = previous {
        let props_by: HashMap<&str, &ChunkPropositions> =
            props.iter().map(|p| (p.chunk_id.as_str(), p)).collect();
        for e in ents {
            if let Some(p) = props_by.get(e.chunk_id.as_str()) {
                if p.fingerprint == e.fingerprint {
                    cached.insert(e.chunk_id.as_str(), (e, p));
                }
            }
        }
    }

    let results: Vec<Result<(ChunkEntities, ChunkPropositions, bool)>> = ordered
        .par_iter()
        .zip(prev_of.par_iter())
        .map(|(chunk, prev)| {
            let fp = fingerprint(gw, chunk, *prev);
            if let Some((e, p)) = cached.get(chunk.chunk_id.as_str()) {
                if e.fingerprint == fp {
                    return Ok(((*e).clone(), (*p).clone(), true));
                }
            }
            extract_chunk(gw, chunk, *prev, fp).map(|(e, p)| (e, p, false))
        })
        .collect();

    let mut out = ExtractionOutput::default();
    let mut next_seq: HashMap<String, usize> = HashMap::new();
    for (chunk, res) in ordered.iter().zip(results) {
        let (ents, props, reused) = res?;
        if reused {
            out.reused_chunks += 1;
        }
        let doc_rank = rank.get(chunk.doc_id.as_str()).copied().unwrap_or(usize::MAX);
        for fact in &props.propositions {
            let seq = next_seq.entry(chunk.doc_id.clone()).or_insert(0);
            out.propositions.push(Proposition {
                prop_id: format!("{}::p{}", chunk.doc_id, *seq),
                chunk_id: chunk.chunk_id.clone(),
                doc_id: chunk.doc_id.clone(),
                doc_rank,
                seq_in_doc: *seq,
                text: fact.text.clone(),
                entity_keys: fact.entity_keys.clone(),
            });
            *seq += 1;
        }
        out.degradations.extend(props.degradations.iter().cloned());
        out.chunk_entities.push(ents);
        out.chunk_propositions.push(props);
    }
    Ok(out)
}

pub const ENTITIES_FILE: &str = "entities.jsonl";
pub const PROPOSITIONS_FILE: &str = "propositions.jsonl";

pub fn save_artifacts(dir: &Path, out: &ExtractionOutput) -> Result<()> {
    write_jsonl(&dir.join(ENTITIES_FILE), &out.chunk_entities)?;
    write_jsonl(&dir.join(PROPOSITIONS_FILE), &out.chunk_propositions)
}

/// Previously saved artifacts, or `None` when either file is missing.
pub fn load_artifacts(dir: &Path) -> Result<Option<(Vec<ChunkEntities>, Vec<ChunkPropositions>)>> {
    let e = dir.join(ENTITIES_FILE);
    let p = dir.join(PROPOSITIONS_FILE);
    if !e.exists() || !p.exists() {
        return Ok(None);
    }
    Ok(Some((read_jsonl(&e)?, read_jsonl(&p)?)))
}
