//! Recursive cluster-then-summarize trees.
//!
//! Both trees are built by the same routine: embed the leaves, cluster the
//! current level, summarize each cluster into a parent node, embed the
//! parents, repeat. The two trees never share nodes.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{cluster, ClusteringConfig};
use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::gateway::{Gateway, PromptName};
use crate::text::{count_tokens, truncate_tokens};

pub const DEFAULT_LEVEL_CAP: usize = 4;
pub const DEFAULT_SUMMARY_BUDGET: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeKind {
    Similarity,
    Relatedness,
}

impl TreeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TreeKind::Similarity => "similarity",
            TreeKind::Relatedness => "relatedness",
        }
    }

    fn id_prefix(self) -> &'static str {
        match self {
            TreeKind::Similarity => "sim",
            TreeKind::Relatedness => "rel",
        }
    }
}

impl fmt::Display for TreeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TreeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "similarity" => Ok(TreeKind::Similarity),
            "relatedness" => Ok(TreeKind::Relatedness),
            other => Err(Error::Config(format!("unknown tree `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    ChunkLeaf,
    AggregateLeaf,
    Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub node_id: String,
    pub tree: TreeKind,
    pub level: usize,
    pub kind: NodeKind,
    pub text: String,
    /// Stored separately in `embeddings.bin`.
    #[serde(skip)]
    pub embedding: Embedding,
    pub child_ids: Vec<String>,
    /// chunk_id or agg_id for leaves.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
    /// Set when a singleton cluster was carried up a level unchanged. Such
    /// nodes repeat their child's text and are left out of the pool.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub promoted_from: Option<String>,
    /// The summarizer failed and the text is a truncated concatenation.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexTree {
    pub tree: TreeKind,
    pub nodes: Vec<TreeNode>,
    /// Node ids per level, level 0 first.
    pub levels: Vec<Vec<String>>,
}

impl IndexTree {
    pub fn max_level(&self) -> usize {
        self.levels.len().saturating_sub(1)
    }

    pub fn roots(&self) -> &[String] {
        self.levels.last().map_or(&[], Vec::as_slice)
    }

    pub fn node(&self, id: &str) -> Option<&TreeNode> {
        self.nodes.iter().find(|n| n.node_id == id)
    }

    pub fn index(&self) -> HashMap<&str, &TreeNode> {
        self.nodes.iter().map(|n| (n.node_id.as_str(), n)).collect()
    }

    /// (parent, child) pairs.
    pub fn edges(&self) -> Vec<(String, String)> {
        self.nodes
            .iter()
            .flat_map(|n| n.child_ids.iter().map(|c| (n.node_id.clone(), c.clone())))
            .collect()
    }

    pub fn fallback_nodes(&self) -> Vec<String> {
        self.nodes
            .iter()
            .filter(|n| n.fallback)
            .map(|n| n.node_id.clone())
            .collect()
    }

    pub fn promoted_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.promoted_from.is_some()).count()
    }
}

#[derive(Debug, Clone)]
pub struct Leaf {
    pub text: String,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    /// Total number of levels, leaves included.
    pub level_cap: usize,
    pub summary_budget: usize,
    pub clustering: ClusteringConfig,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            level_cap: DEFAULT_LEVEL_CAP,
            summary_budget: DEFAULT_SUMMARY_BUDGET,
            clustering: ClusteringConfig::default(),
        }
    }
}

/// Summarize member texts (joined by blank lines, in order) within
/// `budget` tokens.
pub fn summarize_cluster(gw: &Gateway, members: &[&str], budget: usize) -> Result<String> {
    if members.is_empty() {
        return Err(Error::Precondition("cannot summarize an empty cluster".into()));
    }
    let joined = members.join("\n\n");
    let resp = gw.prompt(PromptName::Summarize, &[("text", &joined)], Some(budget as u32))?;
    let text = truncate_tokens(resp.text.trim(), budget).trim().to_string();
    if text.is_empty() {
        return Err(Error::EmptyResponse);
    }
    Ok(text)
}

fn fallback_summary(members: &[&str], budget: usize) -> String {
    truncate_tokens(&members.join("\n\n"), budget).trim().to_string()
}

fn embed_all(gw: &Gateway, texts: Vec<String>) -> Result<Vec<Embedding>> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    gw.embed(&texts)
}

/// Build one tree over `leaves`.
///
/// Each level is clustered with soft GMM assignments and every distinct
/// cluster becomes a parent. Single-member clusters are promoted without a
/// summary call. Recursion stops when a level has one node, when every
/// cluster is a singleton, or at the level cap.
pub fn build_tree(gw: &Gateway, leaves: &[Leaf], kind: TreeKind, cfg: &TreeConfig) -> Result<IndexTree> {
    if leaves.is_empty() {
        return Err(Error::Precondition(format!("no leaves for the {kind} tree")));
    }
    if cfg.level_cap == 0 {
        return Err(Error::Config("level cap must be at least 1".into()));
    }
    let prefix = kind.id_prefix();
    let leaf_kind = match kind {
        TreeKind::Similarity => NodeKind::ChunkLeaf,
        TreeKind::Relatedness => NodeKind::AggregateLeaf,
    };
    let embeddings = embed_all(gw, leaves.iter().map(|l| l.text.clone()).collect())?;
    let mut nodes: Vec<TreeNode> = leaves
        .iter()
        .zip(embeddings)
        .enumerate()
        .map(|(i, (leaf, embedding))| TreeNode {
            node_id: format!("{prefix}:0:{i}"),
            tree: kind,
            level: 0,
            kind: leaf_kind,
            text: leaf.text.clone(),
            embedding,
            child_ids: Vec::new(),
            provenance: Some(leaf.provenance.clone()),
            promoted_from: None,
            fallback: false,
        })
        .collect();
    let mut levels = vec![nodes.iter().map(|n| n.node_id.clone()).collect::<Vec<_>>()];
    let mut current: Vec<usize> = (0..nodes.len()).collect();

    for level in 1..cfg.level_cap {
        if current.len() <= 1 {
            break;
        }
        let vectors: Vec<Vec<f64>> = current.iter().map(|&i| nodes[i].embedding.to_f64()).collect();
        let mut ccfg = cfg.clustering.clone();
        ccfg.seed = ccfg.seed.wrapping_add(level as u64 - 1);
        let clustering = cluster(&vectors, &ccfg)?;

        // soft clustering can yield two components with the same members
        let mut seen = BTreeSet::new();
        let groups: Vec<Vec<usize>> = clustering
            .clusters
            .into_iter()
            .filter(|c| seen.insert(c.clone()))
            .map(|c| c.into_iter().map(|m| current[m]).collect())
            .collect();
        if groups.iter().all(|g| g.len() == 1) {
            break;
        }
        tracing::debug!(tree = %kind, level, clusters = groups.len(), "clustered level");

        let summaries: Vec<Option<(String, bool)>> = groups
            .par_iter()
            .map(|g| {
                if g.len() == 1 {
                    return None;
                }
                let texts: Vec<&str> = g.iter().map(|&i| nodes[i].text.as_str()).collect();
                Some(match summarize_cluster(gw, &texts, cfg.summary_budget) {
                    Ok(s) => (s, false),
                    Err(e) => {
                        tracing::warn!(tree = %kind, level, error = %e, "summary failed, using concatenation");
                        (fallback_summary(&texts, cfg.summary_budget), true)
                    }
                })
            })
            .collect();
        let new_texts: Vec<String> = summaries
            .iter()
            .flatten()
            .map(|(t, _)| t.clone())
            .collect();
        let mut new_embeddings = embed_all(gw, new_texts)?.into_iter();

        let mut next = Vec::with_capacity(groups.len());
        for (idx, (g, summary)) in groups.iter().zip(summaries).enumerate() {
            let child_ids: Vec<String> = g.iter().map(|&i| nodes[i].node_id.clone()).collect();
            let node = match summary {
                Some((text, fallback)) => TreeNode {
                    node_id: format!("{prefix}:{level}:{idx}"),
                    tree: kind,
                    level,
                    kind: NodeKind::Summary,
                    text,
                    embedding: new_embeddings.next().expect("one embedding per summary"),
                    child_ids,
                    provenance: None,
                    promoted_from: None,
                    fallback,
                },
                None => {
                    let child = &nodes[g[0]];
                    TreeNode {
                        node_id: format!("{prefix}:{level}:{idx}"),
                        tree: kind,
                        level,
                        kind: NodeKind::Summary,
                        text: child.text.clone(),
                        embedding: child.embedding.clone(),
                        child_ids,
                        provenance: None,
                        promoted_from: Some(child.node_id.clone()),
                        fallback: false,
                    }
                }
            };
            next.push(nodes.len());
            nodes.push(node);
        }
        levels.push(next.iter().map(|&i| nodes[i].node_id.clone()).collect());
        current = next;
    }
    Ok(IndexTree {
        tree: kind,
        nodes,
        levels,
    })
}

/// Tokens across all materialized (non-promoted) nodes.
pub fn tree_tokens(tree: &IndexTree) -> usize {
    tree.nodes
        .iter()
        .filter(|n| n.promoted_from.is_none())
        .map(|n| count_tokens(&n.text))
        .sum()
}
