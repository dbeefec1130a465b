//! Pairwise-connection coverage of clustering philosophies against
//! per-question gold passage clusters.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{cluster, ClusteringConfig};
use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::gateway::{Gateway, PromptName};
use crate::jsonl::read_jsonl;
use crate::text::first_sentence;

pub const COVERAGE_FILE: &str = "coverage.json";

/// Unordered passage pairs, stored smaller id first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PairwiseEdgeSet(BTreeSet<(String, String)>);

impl PairwiseEdgeSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds the pair in canonical order; self-pairs are ignored.
    pub fn insert(&mut self, a: &str, b: &str) -> bool {
        match a.cmp(b) {
            std::cmp::Ordering::Less => self.0.insert((a.to_string(), b.to_string())),
            std::cmp::Ordering::Greater => self.0.insert((b.to_string(), a.to_string())),
            std::cmp::Ordering::Equal => false,
        }
    }

    pub fn contains(&self, a: &str, b: &str) -> bool {
        let key = if a <= b { (a, b) } else { (b, a) };
        self.0.contains(&(key.0.to_string(), key.1.to_string()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, String)> {
        self.0.iter()
    }

    pub fn intersection(&self, other: &PairwiseEdgeSet) -> PairwiseEdgeSet {
        PairwiseEdgeSet(self.0.intersection(&other.0).cloned().collect())
    }

    pub fn extend(&mut self, other: &PairwiseEdgeSet) {
        self.0.extend(other.0.iter().cloned());
    }
}

/// Union over clusters of all member pairs.
pub fn expand_pairwise<S: AsRef<str>>(clusters: &[Vec<S>]) -> PairwiseEdgeSet {
    let mut out = PairwiseEdgeSet::new();
    for c in clusters {
        for (i, a) in c.iter().enumerate() {
            for b in &c[i + 1..] {
                out.insert(a.as_ref(), b.as_ref());
            }
        }
    }
    out
}

/// Percentage of gold edges present in `pred`.
pub fn coverage(gold: &PairwiseEdgeSet, pred: &PairwiseEdgeSet) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::UndefinedRatio("coverage of an empty gold edge set".into()));
    }
    Ok(100.0 * gold.intersection(pred).len() as f64 / gold.len() as f64)
}

/// (overlap@similarity, overlap@relatedness): the share of correct
/// similarity edges that are also correct relatedness edges, and the
/// converse. Each side errors when its correct set is empty.
pub fn overlap_ratios(
    gold: &PairwiseEdgeSet,
    sim_pred: &PairwiseEdgeSet,
    rel_pred: &PairwiseEdgeSet,
) -> (Result<f64>, Result<f64>) {
    let correct_sim = gold.intersection(sim_pred);
    let correct_rel = gold.intersection(rel_pred);
    let shared = correct_sim.intersection(&correct_rel).len() as f64;
    let ratio = |set: &PairwiseEdgeSet, side: &str| {
        if set.is_empty() {
            Err(Error::UndefinedRatio(format!("no correct {side} connections")))
        } else {
            Ok(100.0 * shared / set.len() as f64)
        }
    };
    (
        ratio(&correct_sim, "similarity"),
        ratio(&correct_rel, "relatedness"),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Philosophy {
    Similarity,
    Relatedness,
}

impl fmt::Display for Philosophy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Philosophy::Similarity => "similarity",
            Philosophy::Relatedness => "relatedness",
        })
    }
}

impl FromStr for Philosophy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "similarity" => Ok(Philosophy::Similarity),
            "relatedness" => Ok(Philosophy::Relatedness),
            other => Err(Error::Config(format!("unknown clustering philosophy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhilosophyClusters {
    pub mode: Philosophy,
    pub clusters: Vec<Vec<String>>,
    /// Extracted topics (relatedness mode only), one per passage.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub topics: Vec<String>,
    /// Passages whose topic fell back to their first sentence.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degraded: Vec<String>,
}

fn passage_text(d: &Document) -> String {
    if d.title.trim().is_empty() {
        d.text.clone()
    } else {
        format!("{}\n{}", d.title.trim(), d.text)
    }
}

/// Cluster passages by their own embeddings (similarity) or by the
/// embeddings of their extracted topics (relatedness).
pub fn run_philosophy_clustering(
    gw: &Gateway,
    passages: &[Document],
    mode: Philosophy,
    cfg: &ClusteringConfig,
) -> Result<PhilosophyClusters> {
    if passages.is_empty() {
        return Err(Error::Precondition("no passages to cluster".into()));
    }
    let texts: Vec<String> = passages.iter().map(passage_text).collect();
    let mut topics = Vec::new();
    let mut degraded = Vec::new();
    let to_embed = match mode {
        Philosophy::Similarity => texts,
        Philosophy::Relatedness => {
            let results: Vec<(String, bool)> = texts
                .par_iter()
                .map(|t| match gw.prompt(PromptName::Topic, &[("paragraph", t)], Some(64)) {
                    Ok(r) if !r.text.trim().is_empty() => (r.text.trim().to_string(), false),
                    Ok(_) => (first_sentence(t).to_string(), true),
                    Err(e) => {
                        tracing::warn!(error = %e, "topic extraction failed, using first sentence");
                        (first_sentence(t).to_string(), true)
                    }
                })
                .collect();
            for ((topic, bad), d) in results.into_iter().zip(passages) {
                if bad {
                    degraded.push(d.doc_id.clone());
                }
                topics.push(topic);
            }
            topics.clone()
        }
    };
    let vectors: Vec<Vec<f64>> = gw.embed(&to_embed)?.iter().map(|e| e.to_f64()).collect();
    let clusters = if vectors.len() == 1 {
        vec![vec![passages[0].doc_id.clone()]]
    } else {
        cluster(&vectors, cfg)?
            .clusters
            .into_iter()
            .map(|c| c.into_iter().map(|i| passages[i].doc_id.clone()).collect())
            .collect()
    };
    Ok(PhilosophyClusters {
        mode,
        clusters,
        topics,
        degraded,
    })
}

/// Candidate passages of one question: the gold cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionCluster {
    #[serde(alias = "id")]
    pub question_id: String,
    pub supporting: Vec<String>,
    #[serde(default)]
    pub distractors: Vec<String>,
}

pub fn load_question_clusters(path: &Path) -> Result<Vec<QuestionCluster>> {
    read_jsonl(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoldMode {
    /// Only supporting passages form the gold cluster.
    Supporting,
    /// Supporting and distractor passages together.
    All,
}

pub fn gold_edges(clusters: &[QuestionCluster], mode: GoldMode) -> PairwiseEdgeSet {
    let lists: Vec<Vec<&str>> = clusters
        .iter()
        .map(|c| {
            let mut ids: Vec<&str> = c.supporting.iter().map(String::as_str).collect();
            if mode == GoldMode::All {
                ids.extend(c.distractors.iter().map(String::as_str));
            }
            ids
        })
        .collect();
    expand_pairwise(&lists)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveragePair {
    pub supporting: f64,
    pub all: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeCounts {
    pub gold_supporting: usize,
    pub gold_all: usize,
    pub similarity: usize,
    pub relatedness: usize,
    pub correct_similarity: usize,
    pub correct_relatedness: usize,
    pub shared_correct: usize,
}

/// Coverage of both philosophies under both gold modes, plus the overlap
/// of their correct connections in the supporting-only setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub similarity: CoveragePair,
    pub relatedness: CoveragePair,
    /// `None` when no supporting edge is covered by similarity.
    pub overlap_at_similarity: Option<f64>,
    /// `None` when no supporting edge is covered by relatedness.
    pub overlap_at_relatedness: Option<f64>,
    pub edges: EdgeCounts,
}

impl CoverageReport {
    pub fn table(&self) -> String {
        let pct = |x: Option<f64>| x.map_or("undefined".to_string(), |v| format!("{v:.2}%"));
        format!(
            "                 supporting    all\nsimilarity       {:>9.2}%  {:>6.2}%\nrelatedness      {:>9.2}%  {:>6.2}%\noverlap@similarity   {}\noverlap@relatedness  {}\n",
            self.similarity.supporting,
            self.similarity.all,
            self.relatedness.supporting,
            self.relatedness.all,
            pct(self.overlap_at_similarity),
            pct(self.overlap_at_relatedness),
        )
    }
}

pub fn coverage_report(
    gold: &[QuestionCluster],
    sim_clusters: &[Vec<String>],
    rel_clusters: &[Vec<String>],
) -> Result<CoverageReport> {
    let gold_sup = gold_edges(gold, GoldMode::Supporting);
    let gold_all = gold_edges(gold, GoldMode::All);
    let sim = expand_pairwise(sim_clusters);
    let rel = expand_pairwise(rel_clusters);
    let (at_sim, at_rel) = overlap_ratios(&gold_sup, &sim, &rel);
    let correct_sim = gold_sup.intersection(&sim);
    let correct_rel = gold_sup.intersection(&rel);
    Ok(CoverageReport {
        similarity: CoveragePair {
            supporting: coverage(&gold_sup, &sim)?,
            all: coverage(&gold_all, &sim)?,
        },
        relatedness: CoveragePair {
            supporting: coverage(&gold_sup, &rel)?,
            all: coverage(&gold_all, &rel)?,
        },
        overlap_at_similarity: at_sim.ok(),
        overlap_at_relatedness: at_rel.ok(),
        edges: EdgeCounts {
            gold_supporting: gold_sup.len(),
            gold_all: gold_all.len(),
            similarity: sim.len(),
            relatedness: rel.len(),
            correct_similarity: correct_sim.len(),
            correct_relatedness: correct_rel.len(),
            shared_correct: correct_sim.intersection(&correct_rel).len(),
        },
    })
}
