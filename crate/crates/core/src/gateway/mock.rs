//! Deterministic offline backend.
//!
//! Every rule here is a pure function of the request, so a mock build is
//! reproducible across processes:
//!
//! - embedding: L2-normalized hashed bag of lowercased non-stopword tokens
//!   (256 dimensions by default);
//! - rewrite: identity;
//! - entity extraction: capitalized word spans (see [`capitalized_spans`]);
//! - proposition extraction: one fact per sentence that mentions at least
//!   one of the supplied entities;
//! - summarization: the first sentence of each blank-line separated unit,
//!   in order;
//! - topic: the most frequent capitalized span, else the opening words;
//! - QA: a two-hop keyword echo (see [`mock_answer`]);
//! - hierarchy label: always `low`.

use std::collections::{BTreeSet, HashMap};

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use super::prompts::PromptName;
use super::{Backend, BackendCompletion, CompletionRequest, TokenUsage};
use crate::error::{Error, Result};
use crate::text::{
    contains_phrase, count_tokens, first_sentence, is_stopword, normalize_key, sentences,
    truncate_tokens, word_tokens,
};

pub const MOCK_EMBEDDING_DIM: usize = 256;

#[derive(Debug, Clone)]
pub struct MockBackend {
    dim: usize,
}

impl Default for MockBackend {
    fn default() -> Self {
        MockBackend {
            dim: MOCK_EMBEDDING_DIM,
        }
    }
}

impl MockBackend {
    pub fn with_dim(dim: usize) -> Self {
        assert!(dim > 0, "embedding dim must be positive");
        MockBackend { dim }
    }

    pub fn embed_one(&self, text: &str) -> Vec<f32> {
        let words = word_tokens(text);
        let mut features: Vec<&str> = words
            .iter()
            .map(String::as_str)
            .filter(|w| !is_stopword(w))
            .collect();
        if features.is_empty() {
            features = words.iter().map(String::as_str).collect();
        }
        let mut v = vec![0.0f64; self.dim];
        if features.is_empty() {
            v[bucket(text.trim(), self.dim)] = 1.0;
        }
        for f in features {
            v[bucket(f, self.dim)] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| (x / norm) as f32).collect()
    }
}

fn bucket(token: &str, dim: usize) -> usize {
    let digest = Sha256::digest(token.as_bytes());
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    (u64::from_le_bytes(b) % dim as u64) as usize
}

impl Backend for MockBackend {
    fn id(&self) -> &str {
        "mock"
    }

    fn complete(&self, req: &CompletionRequest) -> Result<BackendCompletion> {
        let var = |name: &str| -> Result<&str> {
            req.vars
                .get(name)
                .map(String::as_str)
                .ok_or_else(|| Error::Precondition(format!("mock: missing `{name}`")))
        };
        let text = match req.prompt {
            PromptName::Rewrite => var("paragraph")?.to_string(),
            PromptName::EntityExtract => mock_entities(var("paragraph")?),
            PromptName::PropositionExtract => {
                mock_propositions(var("paragraph")?, var("entities")?)
            }
            PromptName::Summarize => mock_summary(var("text")?),
            PromptName::Topic => mock_topic(var("paragraph")?),
            PromptName::QaAnswer => mock_answer(var("context")?, var("question")?),
            PromptName::HierarchyLabel => "low".to_string(),
        };
        let text = truncate_tokens(&text, req.max_tokens as usize).to_string();
        Ok(BackendCompletion {
            usage: TokenUsage {
                prompt_tokens: count_tokens(&req.text) as u64,
                completion_tokens: count_tokens(&text) as u64,
            },
            text,
        })
    }

    fn embed(&self, _model: &str, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

fn split_word(raw: &str) -> (bool, &str, bool) {
    let is_edge = |c: char| !c.is_alphanumeric();
    let core = raw.trim_matches(is_edge);
    let leading_break = raw.starts_with(|c: char| !c.is_alphanumeric());
    let trailing_break = raw.ends_with(|c: char| !c.is_alphanumeric());
    (leading_break, core, trailing_break)
}

/// Capitalized spans of one sentence.
///
/// A span is a maximal run of words starting with an uppercase letter and
/// not separated by punctuation. Leading stopwords (`The`, `In`, ...) are
/// stripped, a lone `I` is ignored, and a single-word span in sentence
/// initial position is dropped since its capital may be positional.
fn sentence_caps(sentence: &str) -> Vec<String> {
    let words: Vec<(bool, &str, bool)> = sentence.split_whitespace().map(split_word).collect();
    let mut runs: Vec<(usize, Vec<&str>)> = Vec::new();
    let mut current: Option<(usize, Vec<&str>)> = None;
    let mut prev_break = true;
    for (i, &(lead, core, trail)) in words.iter().enumerate() {
        let capital = core.chars().next().is_some_and(char::is_uppercase);
        if capital && !lead && !prev_break {
            if let Some((_, run)) = current.as_mut() {
                run.push(core);
            } else {
                current = Some((i, vec![core]));
            }
        } else {
            if let Some(run) = current.take() {
                runs.push(run);
            }
            if capital {
                current = Some((i, vec![core]));
            }
        }
        prev_break = trail;
    }
    if let Some(run) = current.take() {
        runs.push(run);
    }

    let mut out = Vec::new();
    for (start, run) in runs {
        let skip = run
            .iter()
            .take_while(|w| is_stopword(&w.to_lowercase()))
            .count();
        let kept = &run[skip..];
        if kept.is_empty() || (kept.len() == 1 && (start + skip == 0 || kept[0] == "I")) {
            continue;
        }
        out.push(kept.join(" "));
    }
    out
}

/// Capitalized spans of `text` in order of first appearance, deduplicated
/// by normalized key.
pub fn capitalized_spans(text: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for s in sentences(text) {
        for span in sentence_caps(s) {
            if seen.insert(normalize_key(&span)) {
                out.push(span);
            }
        }
    }
    out
}

fn mock_entities(paragraph: &str) -> String {
    let mut obj = Map::new();
    for (i, name) in capitalized_spans(paragraph).into_iter().enumerate() {
        obj.insert(format!("n{}", i + 1), json!({"name": name, "type": "Entity"}));
    }
    Value::Object(obj).to_string()
}

fn mock_propositions(paragraph: &str, entities: &str) -> String {
    let names: Vec<&str> = entities
        .split(", ")
        .map(str::trim)
        .filter(|n| !n.is_empty())
        .collect();
    let mut obj = Map::new();
    for s in sentences(paragraph) {
        let toks = word_tokens(s);
        let mentioned: Vec<&str> = names
            .iter()
            .copied()
            .filter(|n| contains_phrase(&toks, &word_tokens(n)))
            .collect();
        if mentioned.is_empty() {
            continue;
        }
        let triplets: Vec<Value> = mentioned
            .windows(2)
            .map(|w| json!([w[0], "related to", w[1]]))
            .collect();
        obj.insert(
            format!("f{}", obj.len() + 1),
            json!({"fact": s, "triplets": triplets}),
        );
    }
    Value::Object(obj).to_string()
}

fn mock_summary(text: &str) -> String {
    text.split("\n\n")
        .map(str::trim)
        .filter(|u| !u.is_empty())
        .map(first_sentence)
        .collect::<Vec<_>>()
        .join(" ")
}

fn mock_topic(paragraph: &str) -> String {
    let spans: Vec<String> = sentences(paragraph)
        .into_iter()
        .flat_map(sentence_caps)
        .collect();
    let mut counts: HashMap<String, usize> = HashMap::new();
    for s in &spans {
        *counts.entry(normalize_key(s)).or_default() += 1;
    }
    let mut best: Option<(&String, usize)> = None;
    for s in &spans {
        let c = counts[&normalize_key(s)];
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((s, c));
        }
    }
    match best {
        Some((s, _)) => s.clone(),
        None => truncate_tokens(first_sentence(paragraph), 8).to_string(),
    }
}

/// Two-hop keyword echo used by the mock QA rule.
///
/// 1. The anchor is the context sentence sharing the most non-stopword
///    tokens with the question (earliest on ties).
/// 2. Bridges are the anchor's capitalized spans not already in the
///    question.
/// 3. For each bridge, the other sentences mentioning it are tried by
///    shared question words, then context order; the first yields the
///    answer: its first capitalized span that is neither the bridge nor in
///    the question.
///
/// Falls back to the first bridge, then to the most frequent span in the
/// context, then to `unknown`.
pub fn mock_answer(context: &str, question: &str) -> String {
    let q_all: BTreeSet<String> = word_tokens(question).into_iter().collect();
    let q_content: BTreeSet<&String> = q_all.iter().filter(|w| !is_stopword(w)).collect();
    let in_question = |span: &str| word_tokens(span).iter().all(|w| q_all.contains(w));

    let sents = sentences(context);
    let overlap = |s: &str| {
        word_tokens(s)
            .iter()
            .collect::<BTreeSet<_>>()
            .iter()
            .filter(|w| q_content.contains(*w))
            .count()
    };
    let overlap_all = |s: &str| {
        word_tokens(s)
            .iter()
            .collect::<BTreeSet<_>>()
            .iter()
            .filter(|w| q_all.contains(**w))
            .count()
    };
    let mut anchor: Option<(usize, usize)> = None;
    for (i, s) in sents.iter().enumerate() {
        let o = overlap(s);
        if o > 0 && anchor.is_none_or(|(_, best)| o > best) {
            anchor = Some((i, o));
        }
    }

    if let Some((ai, _)) = anchor {
        let bridges: Vec<String> = sentence_caps(sents[ai])
            .into_iter()
            .filter(|s| !in_question(s))
            .collect();
        for b in &bridges {
            let b_toks = word_tokens(b);
            let mut cands: Vec<(usize, &str)> = sents
                .iter()
                .enumerate()
                .filter(|(i, s)| *i != ai && contains_phrase(&word_tokens(s), &b_toks))
                .map(|(i, s)| (i, *s))
                .collect();
            // most question words first, context order on ties
            cands.sort_by_key(|(i, s)| (std::cmp::Reverse(overlap_all(s)), *i));
            for (_, s) in cands {
                let hit = sentence_caps(s).into_iter().find(|c| {
                    let c_toks = word_tokens(c);
                    !in_question(c)
                        && !contains_phrase(&c_toks, &b_toks)
                        && !contains_phrase(&b_toks, &c_toks)
                });
                if let Some(answer) = hit {
                    return answer;
                }
            }
        }
        if let Some(b) = bridges.into_iter().next() {
            return b;
        }
    }

    let spans: Vec<String> = sents
        .iter()
        .flat_map(|s| sentence_caps(s))
        .filter(|s| !in_question(s))
        .collect();
    let mut counts: HashMap<String, usize> = HashMap::new();
    for s in &spans {
        *counts.entry(normalize_key(s)).or_default() += 1;
    }
    let mut best: Option<(&String, usize)> = None;
    for s in &spans {
        let c = counts[&normalize_key(s)];
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((s, c));
        }
    }
    best.map_or_else(|| "unknown".to_string(), |(s, _)| s.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::cosine;

    #[test]
    fn capitalized_span_heuristic() {
        let spans = capitalized_spans(
            "The Crimson Study was painted by Aldric Venn. In London, Venn met Sir Nicholas Bacon.",
        );
        assert_eq!(spans, ["Crimson Study", "Aldric Venn", "London", "Venn", "Sir Nicholas Bacon"]);
        assert!(capitalized_spans("nothing capitalized here. Also this.").is_empty());
        assert_eq!(capitalized_spans("Bacon painted Head I."), ["Head I"]);
    }

    #[test]
    fn summary_takes_first_sentences() {
        assert_eq!(mock_summary("A. B. C."), "A.");
        assert_eq!(mock_summary("A. B.\n\nC. D."), "A. C.");
    }

    #[test]
    fn disjoint_vocabulary_has_lower_cosine() {
        let m = MockBackend::default();
        let a = m.embed_one("painters exhibit canvases");
        let b = m.embed_one("rivers flood valleys");
        let a2 = m.embed_one("painters exhibit canvases");
        // independent oracle: with 3 distinct buckets each, the cosine is
        // (shared buckets)/3; identical texts share all three
        assert!((cosine(&a, &a2) - 1.0).abs() < 1e-6);
        let shared = {
            let ba: BTreeSet<_> = ["painters", "exhibit", "canvases"]
                .iter()
                .map(|t| bucket(t, MOCK_EMBEDDING_DIM))
                .collect();
            let bb: BTreeSet<_> = ["rivers", "flood", "valleys"]
                .iter()
                .map(|t| bucket(t, MOCK_EMBEDDING_DIM))
                .collect();
            assert_eq!((ba.len(), bb.len()), (3, 3));
            ba.intersection(&bb).count()
        };
        assert!((cosine(&a, &b) - shared as f64 / 3.0).abs() < 1e-6);
        assert!(cosine(&a, &b) < cosine(&a, &a2));
    }

    #[test]
    fn figure_one_question_answers_nicholas_bacon() {
        let context = "Francis Bacon was the son of Sir Nicholas Bacon, Lord Keeper of the Great Seal, and Anne (Cooke) Bacon. Head I is a small oil and tempera on hardboard painting by Francis Bacon, completed in 1948.";
        let answer = mock_answer(context, "Who is the father of the artist who painted Head I?");
        assert!(answer.contains("Nicholas Bacon"), "{answer}");
    }

    #[test]
    fn answer_falls_back() {
        assert_eq!(mock_answer("lowercase only.", "who?"), "unknown");
    }

    #[test]
    fn propositions_need_an_entity() {
        let out = mock_propositions(
            "Drug sales are rising. Eli Lilly sells Mounjaro.",
            "Eli Lilly, Mounjaro",
        );
        let v: Value = serde_json::from_str(&out).unwrap();
        let obj = v.as_object().unwrap();
        assert_eq!(obj.len(), 1);
        assert_eq!(obj["f1"]["fact"], "Eli Lilly sells Mounjaro.");
        assert_eq!(obj["f1"]["triplets"][0][2], "Mounjaro");
    }
}
