//! The unified retrieval pool: every node of both trees (optionally plus raw
//! propositions) in one flat list, searched by exhaustive cosine or BM25.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine, Embedding};
use crate::error::{Error, Result};
use crate::extraction::Proposition;
use crate::gateway::Gateway;
use crate::text::word_tokens;
use crate::tree::{IndexTree, NodeKind, TreeKind};

pub const DEFAULT_TOP_K: usize = 20;
pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;
pub const POOL_FILE: &str = "pool.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    SimChunk,
    SimSummary,
    RelAggregate,
    RelSummary,
    RawProposition,
}

impl Origin {
    pub const ALL: [Origin; 5] = [
        Origin::SimChunk,
        Origin::SimSummary,
        Origin::RelAggregate,
        Origin::RelSummary,
        Origin::RawProposition,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Origin::SimChunk => "sim_chunk",
            Origin::SimSummary => "sim_summary",
            Origin::RelAggregate => "rel_aggregate",
            Origin::RelSummary => "rel_summary",
            Origin::RawProposition => "raw_proposition",
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Origin {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Origin::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown pool origin `{s}`")))
    }
}

/// Which origins enter the pool. Serialized as a sorted list of origin
/// names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PoolFlags(pub BTreeSet<Origin>);

impl Default for PoolFlags {
    fn default() -> Self {
        PoolFlags::preset("default").expect("built-in preset")
    }
}

impl PoolFlags {
    pub const PRESETS: [&'static str; 6] = ["default", "A", "B", "C", "D", "similarity-only"];

    /// Named compositions: the full method, the four ablations (A)–(D) and
    /// the similarity tree alone.
    pub fn preset(name: &str) -> Option<Self> {
        use Origin::*;
        let set: &[Origin] = match name {
            "default" => &[SimChunk, SimSummary, RelAggregate, RelSummary],
            // drop the relatedness summaries
            "A" => &[SimChunk, SimSummary, RelAggregate],
            // add raw propositions
            "B" => &[SimChunk, SimSummary, RelAggregate, RelSummary, RawProposition],
            // (B) without aggregates
            "C" => &[SimChunk, SimSummary, RelSummary, RawProposition],
            // (C) without relatedness summaries
            "D" => &[SimChunk, SimSummary, RawProposition],
            "similarity-only" => &[SimChunk, SimSummary],
            _ => return None,
        };
        Some(PoolFlags(set.iter().copied().collect()))
    }

    pub fn contains(&self, o: Origin) -> bool {
        self.0.contains(&o)
    }

    pub fn describe(&self) -> String {
        self.0.iter().map(|o| o.as_str()).collect::<Vec<_>>().join(",")
    }
}

impl FromStr for PoolFlags {
    type Err = Error;
    /// A preset name or a comma-separated origin list.
    fn from_str(s: &str) -> Result<Self> {
        if let Some(p) = PoolFlags::preset(s.trim()) {
            return Ok(p);
        }
        let set = s
            .split(',')
            .map(str::trim)
            .filter(|x| !x.is_empty())
            .map(Origin::from_str)
            .collect::<Result<BTreeSet<_>>>()?;
        if set.is_empty() {
            return Err(Error::Config("pool flags enable no origin".into()));
        }
        Ok(PoolFlags(set))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrieverKind {
    #[default]
    Dense,
    Bm25,
}

impl RetrieverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RetrieverKind::Dense => "dense",
            RetrieverKind::Bm25 => "bm25",
        }
    }
}

impl FromStr for RetrieverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(RetrieverKind::Dense),
            "bm25" => Ok(RetrieverKind::Bm25),
            other => Err(Error::Config(format!("unknown retriever `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolConfig {
    pub flags: PoolFlags,
    pub retriever: RetrieverKind,
    pub top_k: usize,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            flags: PoolFlags::default(),
            retriever: RetrieverKind::Dense,
            top_k: DEFAULT_TOP_K,
        }
    }
}

impl PoolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.flags.0.is_empty() {
            return Err(Error::Config("pool flags enable no origin".into()));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub entry_id: String,
    pub origin: Origin,
    /// Tree node id, or the proposition id for raw propositions.
    pub node_id: String,
    pub text: String,
    #[serde(skip)]
    pub embedding: Embedding,
}

/// Okapi BM25 over the pool texts.
#[derive(Debug, Clone, Default)]
pub struct Bm25Index {
    postings: HashMap<String, Vec<(usize, u32)>>,
    doc_len: Vec<f64>,
    avg_len: f64,
}

impl Bm25Index {
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        let mut doc_len = Vec::new();
        for (i, t) in texts.into_iter().enumerate() {
            let toks = word_tokens(t);
            doc_len.push(toks.len() as f64);
            let mut tf: HashMap<String, u32> = HashMap::new();
            for tok in toks {
                *tf.entry(tok).or_default() += 1;
            }
            for (tok, c) in tf {
                postings.entry(tok).or_default().push((i, c));
            }
        }
        let avg_len = if doc_len.is_empty() {
            0.0
        } else {
            doc_len.iter().sum::<f64>() / doc_len.len() as f64
        };
        Bm25Index {
            postings,
            doc_len,
            avg_len,
        }
    }

    /// idf = ln(1 + (N − df + 0.5) / (df + 0.5)), which stays positive.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_len.len() as f64;
        let df = self.postings.get(term).map_or(0, Vec::len) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Score of every document; distinct query terms count once.
    pub fn scores(&self, query: &str) -> Vec<f64> {
        let mut scores = vec![0.0; self.doc_len.len()];
        let terms: BTreeSet<String> = word_tokens(query).into_iter().collect();
        for term in terms {
            let Some(posts) = self.postings.get(&term) else {
                continue;
            };
            let idf = self.idf(&term);
            for &(doc, tf) in posts {
                let tf = tf as f64;
                let norm = 1.0 - BM25_B + BM25_B * self.doc_len[doc] / self.avg_len;
                scores[doc] += idf * tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * norm);
            }
        }
        scores
    }
}

#[derive(Debug, Clone)]
pub struct RetrievalPool {
    pub entries: Vec<PoolEntry>,
    pub flags: PoolFlags,
    bm25: Bm25Index,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hit {
    pub rank: usize,
    pub entry_id: String,
    pub origin: Origin,
    pub node_id: String,
    pub score: f64,
    pub text: String,
}

impl RetrievalPool {
    pub fn new(entries: Vec<PoolEntry>, flags: PoolFlags) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Config(format!(
                "retrieval pool is empty under flags [{}]",
                flags.describe()
            )));
        }
        let bm25 = Bm25Index::build(entries.iter().map(|e| e.text.as_str()));
        Ok(RetrievalPool {
            entries,
            flags,
            bm25,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn counts(&self) -> Vec<(Origin, usize)> {
        Origin::ALL
            .into_iter()
            .map(|o| (o, self.entries.iter().filter(|e| e.origin == o).count()))
            .filter(|(o, _)| self.flags.contains(*o))
            .collect()
    }

    pub fn bm25(&self) -> &Bm25Index {
        &self.bm25
    }

    fn rank(&self, scores: Vec<f64>, top_k: usize) -> Vec<Hit> {
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.sort_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then_with(|| self.entries[a].entry_id.cmp(&self.entries[b].entry_id))
        });
        idx.into_iter()
            .take(top_k)
            .enumerate()
            .map(|(r, i)| {
                let e = &self.entries[i];
                Hit {
                    rank: r + 1,
                    entry_id: e.entry_id.clone(),
                    origin: e.origin,
                    node_id: e.node_id.clone(),
                    score: scores[i],
                    text: e.text.clone(),
                }
            })
            .collect()
    }

    /// Exhaustive cosine scan against a query vector.
    pub fn search_vector(&self, query: &[f32], top_k: usize) -> Vec<Hit> {
        let scores = self
            .entries
            .iter()
            .map(|e| cosine(query, e.embedding.as_slice()))
            .collect();
        self.rank(scores, top_k)
    }

    pub fn search_bm25(&self, query: &str, top_k: usize) -> Vec<Hit> {
        self.rank(self.bm25.scores(query), top_k)
    }
}

/// Flatten both trees (and optionally the propositions) into one pool.
///
/// Promoted singleton nodes repeat their child verbatim, so only the child
/// is kept. `props` and `prop_embeddings` run in parallel and are only read
/// when raw propositions are enabled.
pub fn flatten(
    sim: &IndexTree,
    rel: &IndexTree,
    props: &[Proposition],
    prop_embeddings: &[Embedding],
    flags: &PoolFlags,
) -> Result<RetrievalPool> {
    if sim.tree != TreeKind::Similarity || rel.tree != TreeKind::Relatedness {
        return Err(Error::Precondition("flatten expects (similarity, relatedness) trees".into()));
    }
    let mut entries = Vec::new();
    for tree in [sim, rel] {
        for n in &tree.nodes {
            if n.promoted_from.is_some() {
                continue;
            }
            let origin = match (tree.tree, n.kind) {
                (TreeKind::Similarity, NodeKind::Summary) => Origin::SimSummary,
                (TreeKind::Similarity, _) => Origin::SimChunk,
                (TreeKind::Relatedness, NodeKind::Summary) => Origin::RelSummary,
                (TreeKind::Relatedness, _) => Origin::RelAggregate,
            };
            if flags.contains(origin) {
                entries.push(PoolEntry {
                    entry_id: n.node_id.clone(),
                    origin,
                    node_id: n.node_id.clone(),
                    text: n.text.clone(),
                    embedding: n.embedding.clone(),
                });
            }
        }
    }
    if flags.contains(Origin::RawProposition) {
        if props.len() != prop_embeddings.len() {
            return Err(Error::Precondition(format!(
                "{} propositions but {} proposition embeddings",
                props.len(),
                prop_embeddings.len()
            )));
        }
        for (p, e) in props.iter().zip(prop_embeddings) {
            entries.push(PoolEntry {
                entry_id: format!("prop:{}", p.prop_id),
                origin: Origin::RawProposition,
                node_id: p.prop_id.clone(),
                text: p.text.clone(),
                embedding: e.clone(),
            });
        }
    }
    RetrievalPool::new(entries, flags.clone())
}

/// Embed the query through the gateway and scan the pool.
pub fn retrieve_dense(gw: &Gateway, pool: &RetrievalPool, query: &str, top_k: usize) -> Result<Vec<Hit>> {
    let q = gw
        .embed(&[query.to_string()])
        .map_err(|e| Error::Retrieval(format!("query embedding failed: {e}")))?;
    Ok(pool.search_vector(q[0].as_slice(), top_k))
}

pub fn retrieve_bm25(pool: &RetrievalPool, query: &str, top_k: usize) -> Vec<Hit> {
    pool.search_bm25(query, top_k)
}

/// Dispatch on the configured retriever.
pub fn retrieve(gw: &Gateway, pool: &RetrievalPool, query: &str, cfg: &PoolConfig) -> Result<Vec<Hit>> {
    match cfg.retriever {
        RetrieverKind::Dense => retrieve_dense(gw, pool, query, cfg.top_k),
        RetrieverKind::Bm25 => Ok(retrieve_bm25(pool, query, cfg.top_k)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, text: &str, v: Vec<f32>) -> PoolEntry {
        PoolEntry {
            entry_id: id.into(),
            origin: Origin::SimChunk,
            node_id: id.into(),
            text: text.into(),
            embedding: Embedding(v),
        }
    }

    #[test]
    fn presets_parse() {
        let d: PoolFlags = "D".parse().unwrap();
        assert_eq!(d.describe(), "sim_chunk,sim_summary,raw_proposition");
        let custom: PoolFlags = "rel_aggregate, sim_chunk".parse().unwrap();
        assert_eq!(custom.describe(), "sim_chunk,rel_aggregate");
        assert!("bogus".parse::<PoolFlags>().is_err());
        assert!("".parse::<PoolFlags>().is_err());
    }

    #[test]
    fn dense_ties_break_by_id() {
        let pool = RetrievalPool::new(
            vec![
                entry("b", "x", vec![1.0, 0.0]),
                entry("a", "x", vec![1.0, 0.0]),
                entry("c", "y", vec![0.0, 1.0]),
            ],
            PoolFlags::default(),
        )
        .unwrap();
        let hits = pool.search_vector(&[1.0, 0.0], 10);
        let ids: Vec<_> = hits.iter().map(|h| h.entry_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b", "c"]);
        assert_eq!(hits[0].rank, 1);
        assert_eq!(pool.search_vector(&[1.0, 0.0], 1).len(), 1);
    }

    #[test]
    fn bm25_prefers_unique_term_and_short_docs() {
        let pool = RetrievalPool::new(
            vec![
                entry("1", "apple banana", vec![1.0]),
                entry("2", "apple banana cherry date", vec![1.0]),
                entry("3", "zebra", vec![1.0]),
            ],
            PoolFlags::default(),
        )
        .unwrap();
        assert_eq!(pool.search_bm25("zebra", 3)[0].entry_id, "3");
        let hits = pool.search_bm25("apple banana", 3);
        assert_eq!(hits[0].entry_id, "1");
        assert!(hits[0].score > hits[1].score);
        assert!(pool.search_bm25("nothing", 3).iter().all(|h| h.score == 0.0));
    }

    #[test]
    fn empty_pool_is_a_config_error() {
        assert!(matches!(
            RetrievalPool::new(vec![], PoolFlags::default()),
            Err(Error::Config(_))
        ));
    }
}
