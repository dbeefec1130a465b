//! Retrieve → prompt → answer, scored with EM/F1 and timed per query.

use std::collections::{BTreeSet, HashMap};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::QAItem;
use crate::error::{Error, Result};
use crate::gateway::{Gateway, PromptName};
use crate::pool::{PoolConfig, RetrievalPool, RetrieverKind};

pub const REPORT_FILE: &str = "report.json";
/// Output budget for the QA prompt; answers are meant to be a few words.
pub const ANSWER_MAX_TOKENS: u32 = 64;

/// SQuAD answer normalization: lowercase, drop ASCII punctuation and the
/// articles a/an/the, collapse whitespace.
pub fn normalize_answer(s: &str) -> String {
    let lower: String = s
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    lower
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn f1_single(pred: &str, gold: &str) -> f64 {
    let p: Vec<&str> = pred.split_whitespace().collect();
    let g: Vec<&str> = gold.split_whitespace().collect();
    if p.is_empty() || g.is_empty() {
        return if p == g { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, i64> = HashMap::new();
    for t in &g {
        *counts.entry(t).or_default() += 1;
    }
    let mut same = 0usize;
    for t in &p {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                same += 1;
            }
        }
    }
    if same == 0 {
        return 0.0;
    }
    let precision = same as f64 / p.len() as f64;
    let recall = same as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Exact match (0 or 1) and token F1, each maximized over the golds.
pub fn score_em_f1(prediction: &str, golds: &[String]) -> Result<(u8, f64)> {
    if golds.is_empty() {
        return Err(Error::Precondition("no gold answers".into()));
    }
    let pred = normalize_answer(prediction);
    let mut em = 0u8;
    let mut f1 = 0.0f64;
    for g in golds {
        let gold = normalize_answer(g);
        if pred == gold {
            em = 1;
        }
        f1 = f1.max(f1_single(&pred, &gold));
    }
    Ok((em, f1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub question_id: String,
    pub question: String,
    pub prediction: String,
    pub gold_answers: Vec<String>,
    pub em: u8,
    pub f1: f64,
    pub tpq_seconds: f64,
    pub retrieved_ids: Vec<String>,
    /// Some response came from the cache.
    pub cached: bool,
    /// Replayed latencies were available for every cached response.
    pub timing_valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Answer one question: retrieve, join the hits in rank order with blank
/// lines, ask the QA prompt.
///
/// TPQ covers retrieval and generation. Cached gateway responses
/// contribute their recorded original latency instead of the near-zero
/// lookup time. Gateway failures produce a record with `error` set and
/// EM = F1 = 0.
pub fn answer_question(gw: &Gateway, pool: &RetrievalPool, q: &QAItem, cfg: &PoolConfig) -> Result<AnswerRecord> {
    cfg.validate()?;
    let mut rec = AnswerRecord {
        question_id: q.question_id.clone(),
        question: q.question.clone(),
        prediction: String::new(),
        gold_answers: q.gold_answers.clone(),
        em: 0,
        f1: 0.0,
        tpq_seconds: 0.0,
        retrieved_ids: Vec::new(),
        cached: false,
        timing_valid: true,
        error: None,
    };
    let started = Instant::now();
    let mut replayed = 0.0;
    let hits = match cfg.retriever {
        RetrieverKind::Dense => match gw.embed_timed(std::slice::from_ref(&q.question)) {
            Ok(r) => {
                if r.all_cached {
                    rec.cached = true;
                    replayed += r.replayed_latency_seconds;
                }
                pool.search_vector(r.vectors[0].as_slice(), cfg.top_k)
            }
            Err(e) => {
                rec.error = Some(format!("retrieval: {e}"));
                rec.tpq_seconds = started.elapsed().as_secs_f64();
                return Ok(rec);
            }
        },
        RetrieverKind::Bm25 => pool.search_bm25(&q.question, cfg.top_k),
    };
    rec.retrieved_ids = hits.iter().map(|h| h.entry_id.clone()).collect();
    let context = hits
        .iter()
        .map(|h| h.text.as_str())
        .collect::<Vec<_>>()
        .join("\n\n");
    let answer = gw.prompt(
        PromptName::QaAnswer,
        &[("context", &context), ("question", &q.question)],
        Some(ANSWER_MAX_TOKENS),
    );
    let wall = started.elapsed().as_secs_f64();
    match answer {
        Ok(resp) => {
            if resp.cached {
                rec.cached = true;
                match resp.original_latency_seconds {
                    Some(l) => replayed += l,
                    None => rec.timing_valid = false,
                }
            }
            rec.prediction = resp.text.trim().to_string();
            let (em, f1) = score_em_f1(&rec.prediction, &q.gold_answers)?;
            rec.em = em;
            rec.f1 = f1;
        }
        Err(e) => rec.error = Some(format!("generation: {e}")),
    }
    rec.tpq_seconds = wall + replayed;
    Ok(rec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub retriever: RetrieverKind,
    pub top_k: usize,
    pub pool_flags: String,
    pub pool_size: usize,
    pub question_count: usize,
    pub error_count: usize,
    /// Mean EM over all questions, in percent.
    pub em: f64,
    /// Mean F1 over all questions, in percent.
    pub f1: f64,
    /// Mean TPQ over questions without errors.
    pub tpq_seconds: f64,
    /// Sum of TPQ over questions without errors.
    pub total_seconds: f64,
    pub timing_valid: bool,
    pub records: Vec<AnswerRecord>,
}

impl EvalReport {
    /// Aggregate `records`; all means are recomputed from them.
    pub fn from_records(label: &str, cfg: &PoolConfig, pool_size: usize, records: Vec<AnswerRecord>) -> Self {
        let n = records.len();
        let timed: Vec<&AnswerRecord> = records.iter().filter(|r| r.error.is_none()).collect();
        let total: f64 = timed.iter().map(|r| r.tpq_seconds).sum();
        let mean = |f: &dyn Fn(&AnswerRecord) -> f64| {
            if n == 0 {
                0.0
            } else {
                records.iter().map(f).sum::<f64>() / n as f64
            }
        };
        EvalReport {
            label: label.to_string(),
            retriever: cfg.retriever,
            top_k: cfg.top_k,
            pool_flags: cfg.flags.describe(),
            pool_size,
            question_count: n,
            error_count: n - timed.len(),
            em: 100.0 * mean(&|r| r.em as f64),
            f1: 100.0 * mean(&|r| r.f1),
            tpq_seconds: if timed.is_empty() { 0.0 } else { total / timed.len() as f64 },
            total_seconds: total,
            timing_valid: records.iter().all(|r| r.timing_valid),
            records,
        }
    }

    /// One line per field for terminals.
    pub fn table(&self) -> String {
        format!(
            "label        {}\nretriever    {} (top {})\npool         {} entries [{}]\nquestions    {} ({} errors)\nEM           {:.2}\nF1           {:.2}\nTPQ          {:.4} s{}\n",
            self.label,
            self.retriever.as_str(),
            self.top_k,
            self.pool_size,
            self.pool_flags,
            self.question_count,
            self.error_count,
            self.em,
            self.f1,
            self.tpq_seconds,
            if self.timing_valid { "" } else { " (not timing-valid)" },
        )
    }
}

/// Evaluate every question. With `sequential` the questions run one at a
/// time so TPQ is measured without contention.
pub fn evaluate(
    gw: &Gateway,
    pool: &RetrievalPool,
    qa: &[QAItem],
    cfg: &PoolConfig,
    label: &str,
    sequential: bool,
) -> Result<EvalReport> {
    cfg.validate()?;
    let records: Vec<AnswerRecord> = if sequential {
        qa.iter()
            .map(|q| answer_question(gw, pool, q, cfg))
            .collect::<Result<_>>()?
    } else {
        qa.par_iter()
            .map(|q| answer_question(gw, pool, q, cfg))
            .collect::<Result<_>>()?
    };
    Ok(EvalReport::from_records(label, cfg, pool.len(), records))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyComparison {
    pub method_a: String,
    pub method_b: String,
    pub time_a: f64,
    pub time_b: f64,
    pub pool_a: usize,
    pub pool_b: usize,
    pub tper: f64,
}

/// (time_a / time_b) / (pool_a / pool_b).
pub fn tper(time_a: f64, time_b: f64, pool_a: usize, pool_b: usize) -> Result<f64> {
    if pool_a == 0 || pool_b == 0 {
        return Err(Error::Precondition("pool sizes must be positive".into()));
    }
    if !(time_a > 0.0 && time_b > 0.0) {
        return Err(Error::Precondition("inference times must be positive".into()));
    }
    Ok((time_a / time_b) / (pool_a as f64 / pool_b as f64))
}

/// Compare two reports over the same question set.
pub fn compute_tper(a: &EvalReport, b: &EvalReport) -> Result<EfficiencyComparison> {
    let ids = |r: &EvalReport| -> BTreeSet<String> {
        r.records.iter().map(|x| x.question_id.clone()).collect()
    };
    if ids(a) != ids(b) {
        return Err(Error::Validation(
            "reports cover different question sets".into(),
        ));
    }
    Ok(EfficiencyComparison {
        method_a: a.label.clone(),
        method_b: b.label.clone(),
        time_a: a.total_seconds,
        time_b: b.total_seconds,
        pool_a: a.pool_size,
        pool_b: b.pool_size,
        tper: tper(a.total_seconds, b.total_seconds, a.pool_size, b.pool_size)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golds(g: &[&str]) -> Vec<String> {
        g.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn em_f1_basics() {
        assert_eq!(score_em_f1("Nicholas Bacon", &golds(&["Nicholas Bacon"])).unwrap(), (1, 1.0));
        let (em, f1) = score_em_f1("Sir Nicholas Bacon", &golds(&["Nicholas Bacon"])).unwrap();
        assert_eq!(em, 0);
        assert!((f1 - 0.8).abs() < 1e-12);
        assert_eq!(score_em_f1("", &golds(&["x"])).unwrap(), (0, 0.0));
        assert_eq!(score_em_f1("The Beatles!", &golds(&["beatles"])).unwrap(), (1, 1.0));
        assert!(score_em_f1("x", &[]).is_err());
    }

    #[test]
    fn article_only_strings_match_exactly() {
        assert_eq!(score_em_f1("the", &golds(&["a"])).unwrap(), (1, 1.0));
    }

    #[test]
    fn tper_laws() {
        assert_eq!(tper(3.0, 3.0, 10, 10).unwrap(), 1.0);
        assert_eq!(tper(6.0, 3.0, 10, 10).unwrap(), 2.0);
        assert!(tper(1.0, 1.0, 0, 1).is_err());
    }
}
