//! On-disk index: manifest, nodes, edges, embeddings, aggregates, pool.
//!
//! ```text
//! <index>/manifest.json
//! <index>/nodes.jsonl                  both trees, similarity first
//! <index>/embeddings.bin               one row per line of nodes.jsonl
//! <index>/edges.jsonl
//! <index>/aggregates.jsonl
//! <index>/propositions.jsonl           entity-bearing propositions
//! <index>/proposition_embeddings.bin   one row per proposition (optional)
//! <index>/pool.jsonl                   pool under the build-time flags
//! <index>/extraction/                  per-chunk artifacts for reuse
//! ```
//!
//! `embeddings.bin` is a 20-byte header (`SRRG`, version u32, count u64,
//! dim u32) followed by `count × dim` little-endian f32 values.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregation::{AggregateStats, PropositionAggregate, AGGREGATES_FILE};
use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::extraction::{Entity, Proposition};
use crate::jsonl::{read_json, read_jsonl, write_atomic, write_json, write_jsonl};
use crate::pool::{flatten, PoolFlags, RetrievalPool, POOL_FILE};
use crate::text::sha256_hex;
use crate::tree::{IndexTree, TreeKind, TreeNode};

pub const MAGIC: &[u8; 4] = b"SRRG";
pub const EMBEDDINGS_VERSION: u32 = 1;
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const NODES_FILE: &str = "nodes.jsonl";
pub const EDGES_FILE: &str = "edges.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const PROPOSITIONS_FILE: &str = "propositions.jsonl";
pub const PROPOSITION_EMBEDDINGS_FILE: &str = "proposition_embeddings.bin";
pub const ENTITIES_FILE: &str = "entities.jsonl";
pub const EXTRACTION_DIR: &str = "extraction";

const HEADER_LEN: usize = 4 + 4 + 8 + 4;

pub fn encode_embeddings(rows: &[Embedding]) -> Result<Vec<u8>> {
    let dim = rows.first().map_or(0, Embedding::dim);
    if let Some(bad) = rows.iter().position(|r| r.dim() != dim) {
        return Err(Error::Format(format!(
            "row {bad} has dim {} but expected {dim}",
            rows[bad].dim()
        )));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + rows.len() * dim * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&EMBEDDINGS_VERSION.to_le_bytes());
    out.extend_from_slice(&(rows.len() as u64).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for r in rows {
        for v in r.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<Vec<Embedding>> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing SRRG header".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != EMBEDDINGS_VERSION {
        return Err(Error::Format(format!("unsupported embeddings version {version}")));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let dim = u32_at(16) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != count * dim * 4 {
        return Err(Error::Format(format!(
            "expected {count}×{dim} floats, found {} bytes",
            body.len()
        )));
    }
    Ok(body
        .chunks_exact(dim.max(1) * 4)
        .take(count)
        .map(|row| {
            Embedding(
                row.chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                    .collect(),
            )
        })
        .collect())
}

pub fn write_embeddings(path: &Path, rows: &[Embedding]) -> Result<()> {
    write_atomic(path, &encode_embeddings(rows)?)
}

pub fn read_embeddings(path: &Path) -> Result<Vec<Embedding>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embeddings(&bytes)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub tree: TreeKind,
    pub parent: String,
    pub child: String,
}

/// Extraction and tree statistics in the spirit of a corpus-statistics
/// table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub documents: usize,
    pub chunks: usize,
    pub entities: usize,
    /// All extracted propositions.
    pub propositions: usize,
    /// Propositions with at least one entity.
    pub entity_propositions: usize,
    pub aggregates: AggregateStats,
    pub similarity_nodes: usize,
    pub relatedness_nodes: usize,
    pub similarity_levels: usize,
    pub relatedness_levels: usize,
    pub promoted_nodes: usize,
    pub pool_size: usize,
    pub pool_by_origin: BTreeMap<String, usize>,
    pub reused_chunks: usize,
    pub degraded_chunks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub prompt_version: String,
    pub backend: String,
    pub chat_model: String,
    pub embedding_model: String,
    pub seed: u64,
    /// The build configuration, secrets excluded.
    pub config: serde_json::Value,
    pub counts: Counts,
    pub deviations: Vec<String>,
    pub fallback_summaries: Vec<String>,
    /// sha256 of each written artifact.
    pub artifacts: BTreeMap<String, String>,
    /// Seconds per stage. Not covered by `hash`.
    pub durations: BTreeMap<String, f64>,
    /// sha256 over every other field.
    pub hash: String,
}

impl Manifest {
    pub fn compute_hash(&self) -> String {
        let mut m = self.clone();
        m.durations.clear();
        m.hash.clear();
        let json = serde_json::to_vec(&m).expect("manifest serializes");
        sha256_hex(&[&json])
    }
}

#[derive(Debug, Clone)]
pub struct Index {
    pub manifest: Manifest,
    pub sim: IndexTree,
    pub rel: IndexTree,
    pub aggregates: Vec<PropositionAggregate>,
    pub entities: Vec<Entity>,
    /// Entity-bearing propositions.
    pub propositions: Vec<Proposition>,
    /// Empty when proposition embedding was disabled.
    pub proposition_embeddings: Vec<Embedding>,
}

impl Index {
    pub fn pool(&self, flags: &PoolFlags) -> Result<RetrievalPool> {
        flatten(
            &self.sim,
            &self.rel,
            &self.propositions,
            &self.proposition_embeddings,
            flags,
        )
    }

    pub fn edges(&self) -> Vec<Edge> {
        [&self.sim, &self.rel]
            .into_iter()
            .flat_map(|t| {
                t.edges().into_iter().map(move |(parent, child)| Edge {
                    tree: t.tree,
                    parent,
                    child,
                })
            })
            .collect()
    }
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&[&bytes]))
}

/// Write every artifact, fill in `manifest.artifacts` and `manifest.hash`,
/// and write the manifest last.
pub fn save_index(dir: &Path, index: &mut Index, build_flags: &PoolFlags) -> Result<()> {
    let nodes: Vec<&TreeNode> = index.sim.nodes.iter().chain(&index.rel.nodes).collect();
    write_jsonl(&dir.join(NODES_FILE), &nodes)?;
    let rows: Vec<Embedding> = nodes.iter().map(|n| n.embedding.clone()).collect();
    write_embeddings(&dir.join(EMBEDDINGS_FILE), &rows)?;
    write_jsonl(&dir.join(EDGES_FILE), &index.edges())?;
    write_jsonl(&dir.join(AGGREGATES_FILE), &index.aggregates)?;
    write_jsonl(&dir.join(ENTITIES_FILE), &index.entities)?;
    write_jsonl(&dir.join(PROPOSITIONS_FILE), &index.propositions)?;
    let mut files = vec![
        NODES_FILE,
        EMBEDDINGS_FILE,
        EDGES_FILE,
        AGGREGATES_FILE,
        ENTITIES_FILE,
        PROPOSITIONS_FILE,
        POOL_FILE,
    ];
    if index.proposition_embeddings.is_empty() {
        let stale = dir.join(PROPOSITION_EMBEDDINGS_FILE);
        if stale.exists() {
            std::fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
        }
    } else {
        write_embeddings(&dir.join(PROPOSITION_EMBEDDINGS_FILE), &index.proposition_embeddings)?;
        files.push(PROPOSITION_EMBEDDINGS_FILE);
    }
    let pool = index.pool(build_flags)?;
    write_jsonl(&dir.join(POOL_FILE), &pool.entries)?;

    index.manifest.artifacts.clear();
    for f in files {
        index
            .manifest
            .artifacts
            .insert(f.to_string(), hash_file(&dir.join(f))?);
    }
    index.manifest.hash = index.manifest.compute_hash();
    write_json(&dir.join(MANIFEST_FILE), &index.manifest)
}

fn split_tree(kind: TreeKind, nodes: Vec<TreeNode>) -> IndexTree {
    let mut levels: Vec<Vec<String>> = Vec::new();
    for n in &nodes {
        if levels.len() <= n.level {
            levels.resize(n.level + 1, Vec::new());
        }
        levels[n.level].push(n.node_id.clone());
    }
    IndexTree {
        tree: kind,
        nodes,
        levels,
    }
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Err(Error::Config(format!(
            "{} is not an index directory (no {MANIFEST_FILE})",
            dir.display()
        )));
    }
    read_json(&path)
}

pub fn load_index(dir: &Path) -> Result<Index> {
    let manifest = load_manifest(dir)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "index format {} is not supported",
            manifest.format_version
        )));
    }
    let mut nodes: Vec<TreeNode> = read_jsonl(&dir.join(NODES_FILE))?;
    let rows = read_embeddings(&dir.join(EMBEDDINGS_FILE))?;
    if rows.len() != nodes.len() {
        return Err(Error::Format(format!(
            "{} nodes but {} embedding rows",
            nodes.len(),
            rows.len()
        )));
    }
    for (n, e) in nodes.iter_mut().zip(rows) {
        n.embedding = e;
    }
    let (sim, rel): (Vec<_>, Vec<_>) = nodes.into_iter().partition(|n| n.tree == TreeKind::Similarity);
    let propositions: Vec<Proposition> = read_jsonl(&dir.join(PROPOSITIONS_FILE))?;
    let pe_path = dir.join(PROPOSITION_EMBEDDINGS_FILE);
    let proposition_embeddings = if pe_path.exists() {
        read_embeddings(&pe_path)?
    } else {
        Vec::new()
    };
    Ok(Index {
        manifest,
        sim: split_tree(TreeKind::Similarity, sim),
        rel: split_tree(TreeKind::Relatedness, rel),
        aggregates: read_jsonl(&dir.join(AGGREGATES_FILE))?,
        entities: read_jsonl(&dir.join(ENTITIES_FILE))?,
        propositions,
        proposition_embeddings,
    })
}
