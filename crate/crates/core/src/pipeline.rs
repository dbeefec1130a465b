//! End-to-end commands: build an index, query it, evaluate QA, run the
//! coverage study, compare reports, print statistics.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::aggregation::{aggregate_stats, build_aggregates};
use crate::config::RunConfig;
use crate::corpus::{chunk_corpus, load_corpus, load_qa, CorpusFormat, Document};
use crate::coverage::{
    coverage_report, load_question_clusters, run_philosophy_clustering, CoverageReport, Philosophy,
};
use crate::error::{Error, Result};
use crate::evaluation::{compute_tper, evaluate, EfficiencyComparison, EvalReport};
use crate::extraction::{extract_corpus, filter_entityless, load_artifacts, save_artifacts};
use crate::gateway::prompts::PROMPT_VERSION;
use crate::gateway::Gateway;
use crate::index::{
    load_index, load_manifest, save_index, Counts, Index, Manifest, EXTRACTION_DIR, FORMAT_VERSION,
};
use crate::jsonl::{read_json, write_json, write_jsonl};
use crate::pool::{retrieve, Hit, PoolConfig};
use crate::text::sha256_hex;
use crate::tree::{build_tree, IndexTree, Leaf, TreeKind};

/// The parts of the run config that determine a build.
#[derive(Debug, Serialize)]
struct BuildSettings<'a> {
    max_chunk_tokens: usize,
    aggregate_token_cap: usize,
    embed_propositions: bool,
    tree: &'a crate::tree::TreeConfig,
    pool: &'a PoolConfig,
    corpus_sha256: String,
}

struct Stages(BTreeMap<String, f64>);

impl Stages {
    fn time<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f().map_err(|e| Error::Internal(format!("stage `{name}`: {e}")))?;
        self.0.insert(name.to_string(), t.elapsed().as_secs_f64());
        tracing::info!(stage = name, seconds = self.0[name], "stage finished");
        Ok(out)
    }
}

fn empty_tree(kind: TreeKind) -> IndexTree {
    IndexTree {
        tree: kind,
        nodes: Vec::new(),
        levels: Vec::new(),
    }
}

/// Run extraction, aggregation, both trees and proposition embedding in
/// memory. `extraction_dir`, when given, is read for reusable per-chunk
/// artifacts and receives the new ones.
pub fn build_index(
    gw: &Gateway,
    docs: &[Document],
    cfg: &RunConfig,
    extraction_dir: Option<&Path>,
) -> Result<Index> {
    cfg.validate()?;
    if docs.is_empty() {
        return Err(Error::Precondition("corpus has no documents".into()));
    }
    let mut stages = Stages(BTreeMap::new());
    let mut tree_cfg = cfg.tree.clone();
    tree_cfg.clustering.seed = cfg.seed;

    let chunks = stages.time("chunking", || chunk_corpus(docs, cfg.max_chunk_tokens))?;
    let previous = match extraction_dir {
        Some(dir) => load_artifacts(dir)?,
        None => None,
    };
    let extraction = stages.time("extraction", || {
        extract_corpus(
            gw,
            docs,
            &chunks,
            previous.as_ref().map(|(e, p)| (e.as_slice(), p.as_slice())),
        )
    })?;
    if let Some(dir) = extraction_dir {
        save_artifacts(dir, &extraction)?;
        write_jsonl(&dir.join("degradations.jsonl"), &extraction.degradations)?;
    }
    let all_props = extraction.propositions.len();
    let props = filter_entityless(extraction.propositions.clone());
    let aggregates = stages.time("aggregation", || Ok(build_aggregates(&props, cfg.aggregate_token_cap)))?;

    let sim_leaves: Vec<Leaf> = chunks
        .iter()
        .map(|c| Leaf {
            text: c.text.clone(),
            provenance: c.chunk_id.clone(),
        })
        .collect();
    let sim = stages.time("similarity_tree", || {
        build_tree(gw, &sim_leaves, TreeKind::Similarity, &tree_cfg)
    })?;
    let rel_leaves: Vec<Leaf> = aggregates
        .iter()
        .map(|a| Leaf {
            text: a.text.clone(),
            provenance: a.agg_id.clone(),
        })
        .collect();
    let rel = stages.time("relatedness_tree", || {
        if rel_leaves.is_empty() {
            tracing::warn!("no entity-bearing propositions; relatedness tree is empty");
            Ok(empty_tree(TreeKind::Relatedness))
        } else {
            build_tree(gw, &rel_leaves, TreeKind::Relatedness, &tree_cfg)
        }
    })?;
    let proposition_embeddings = if cfg.embed_propositions && !props.is_empty() {
        stages.time("proposition_embeddings", || {
            gw.embed(&props.iter().map(|p| p.text.clone()).collect::<Vec<_>>())
        })?
    } else {
        Vec::new()
    };

    let split_entities = {
        let mut per: BTreeMap<&str, usize> = BTreeMap::new();
        for a in &aggregates {
            *per.entry(a.entity_key.as_str()).or_default() += 1;
        }
        per.values().filter(|&&n| n > 1).count()
    };
    let promoted = sim.promoted_count() + rel.promoted_count();
    let c = &tree_cfg.clustering;
    let deviations = vec![
        format!("singleton clusters are promoted without a summary call ({promoted} nodes)"),
        format!("the relatedness tree shares the {}-level cap", tree_cfg.level_cap),
        format!(
            "aggregates over {} tokens are split into parts ({split_entities} entities split)",
            cfg.aggregate_token_cap
        ),
        format!(
            "GMM: diagonal covariance, variance floor 1e-6, BIC over k <= {}, soft threshold {}, PCA to {}",
            c.k_max.map_or("min(ceil(sqrt n), 50)".to_string(), |k| k.to_string()),
            c.threshold,
            c.target_dim.map_or("min(dim, 10*ceil(log2 n))".to_string(), |d| d.to_string()),
        ),
        "extraction prompts a chat model directly instead of a fine-tuned extractor".to_string(),
    ];

    let corpus_json = crate::corpus::corpus_to_jsonl(docs)?;
    let settings = BuildSettings {
        max_chunk_tokens: cfg.max_chunk_tokens,
        aggregate_token_cap: cfg.aggregate_token_cap,
        embed_propositions: cfg.embed_propositions,
        tree: &tree_cfg,
        pool: &cfg.pool,
        corpus_sha256: sha256_hex(&[corpus_json.as_bytes()]),
    };
    let counts = Counts {
        documents: docs.len(),
        chunks: chunks.len(),
        entities: extraction.entities().len(),
        propositions: all_props,
        entity_propositions: props.len(),
        aggregates: aggregate_stats(&aggregates),
        similarity_nodes: sim.nodes.len(),
        relatedness_nodes: rel.nodes.len(),
        similarity_levels: sim.levels.len(),
        relatedness_levels: rel.levels.len(),
        promoted_nodes: promoted,
        reused_chunks: extraction.reused_chunks,
        degraded_chunks: extraction
            .degradations
            .iter()
            .map(|d| d.chunk_id.as_str())
            .collect::<std::collections::BTreeSet<_>>()
            .len(),
        ..Counts::default()
    };
    let mut fallback_summaries = sim.fallback_nodes();
    fallback_summaries.extend(rel.fallback_nodes());
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        prompt_version: PROMPT_VERSION.to_string(),
        backend: gw.backend_id().to_string(),
        chat_model: gw.settings().chat_model.clone(),
        embedding_model: gw.settings().embedding_model.clone(),
        seed: cfg.seed,
        config: serde_json::to_value(&settings).map_err(|e| Error::Internal(e.to_string()))?,
        counts,
        deviations,
        fallback_summaries,
        artifacts: BTreeMap::new(),
        durations: stages.0,
        hash: String::new(),
    };
    let mut index = Index {
        manifest,
        sim,
        rel,
        aggregates,
        entities: extraction.entities(),
        propositions: props,
        proposition_embeddings,
    };
    let t = Instant::now();
    let pool = index.pool(&cfg.pool.flags)?;
    index.manifest.durations.insert("flatten".into(), t.elapsed().as_secs_f64());
    index.manifest.counts.pool_size = pool.len();
    index.manifest.counts.pool_by_origin = pool
        .counts()
        .into_iter()
        .map(|(o, n)| (o.as_str().to_string(), n))
        .collect();
    index.manifest.hash = index.manifest.compute_hash();
    Ok(index)
}

fn require<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    let p = p
        .as_deref()
        .ok_or_else(|| Error::Config(format!("no {what} path configured")))?;
    if !p.exists() {
        return Err(Error::Config(format!("{what} path {} does not exist", p.display())));
    }
    Ok(p)
}

/// Build and write the index directory named in `cfg`.
pub fn cmd_build(cfg: &RunConfig) -> Result<Manifest> {
    let corpus = require(&cfg.corpus, "corpus")?;
    cfg.validate()?;
    let docs = load_corpus(corpus, CorpusFormat::JsonlPassages)?;
    let gw = cfg.gateway()?;
    let dir = &cfg.index_dir;
    let mut index = build_index(&gw, &docs, cfg, Some(&dir.join(EXTRACTION_DIR)))?;
    save_index(dir, &mut index, &cfg.pool.flags)?;
    tracing::info!(stats = ?gw.stats(), "gateway usage");
    Ok(index.manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryOutput {
    pub query: String,
    pub retriever: String,
    pub top_k: usize,
    pub pool_flags: String,
    pub pool_size: usize,
    pub hits: Vec<Hit>,
}

pub fn query_index(gw: &Gateway, index: &Index, query: &str, pool_cfg: &PoolConfig) -> Result<QueryOutput> {
    pool_cfg.validate()?;
    let pool = index.pool(&pool_cfg.flags)?;
    let hits = retrieve(gw, &pool, query, pool_cfg)?;
    Ok(QueryOutput {
        query: query.to_string(),
        retriever: pool_cfg.retriever.as_str().to_string(),
        top_k: pool_cfg.top_k,
        pool_flags: pool_cfg.flags.describe(),
        pool_size: pool.len(),
        hits,
    })
}

pub fn cmd_query(cfg: &RunConfig, query: &str) -> Result<QueryOutput> {
    let index = load_index(&cfg.index_dir)?;
    query_index(&cfg.gateway()?, &index, query, &cfg.pool)
}

/// Evaluate the configured QA file and write the report to `out`.
pub fn cmd_evaluate(cfg: &RunConfig, out: &Path, label: Option<&str>, sequential: bool) -> Result<EvalReport> {
    let qa_path = require(&cfg.qa, "qa")?;
    let qa = load_qa(qa_path)?;
    let index = load_index(&cfg.index_dir)?;
    let pool = index.pool(&cfg.pool.flags)?;
    let gw = cfg.gateway()?;
    let label = label.map_or_else(|| cfg.pool.flags.describe(), str::to_string);
    let report = evaluate(&gw, &pool, &qa, &cfg.pool, &label, sequential)?;
    write_json(out, &report)?;
    Ok(report)
}

pub fn cmd_coverage(cfg: &RunConfig, out: &Path) -> Result<CoverageReport> {
    let corpus = require(&cfg.corpus, "corpus")?;
    let clusters_path = require(&cfg.clusters, "question-cluster")?;
    let docs = load_corpus(corpus, CorpusFormat::JsonlPassages)?;
    let gold = load_question_clusters(clusters_path)?;
    let gw = cfg.gateway()?;
    let mut ccfg = cfg.tree.clustering.clone();
    ccfg.seed = cfg.seed;
    let sim = run_philosophy_clustering(&gw, &docs, Philosophy::Similarity, &ccfg)?;
    let rel = run_philosophy_clustering(&gw, &docs, Philosophy::Relatedness, &ccfg)?;
    let report = coverage_report(&gold, &sim.clusters, &rel.clusters)?;
    write_json(out, &report)?;
    Ok(report)
}

pub fn cmd_compare(a: &Path, b: &Path) -> Result<EfficiencyComparison> {
    let ra: EvalReport = read_json(a)?;
    let rb: EvalReport = read_json(b)?;
    compute_tper(&ra, &rb)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsOutput {
    pub index_dir: String,
    pub hash: String,
    pub counts: Counts,
}

pub fn cmd_stats(index_dir: &Path) -> Result<StatsOutput> {
    let m = load_manifest(index_dir)?;
    Ok(StatsOutput {
        index_dir: index_dir.display().to_string(),
        hash: m.hash,
        counts: m.counts,
    })
}

impl StatsOutput {
    pub fn table(&self) -> String {
        let c = &self.counts;
        let a = &c.aggregates;
        format!(
            "documents            {}\nchunks               {}\nentities             {}\npropositions         {} ({} with entities)\naggregates           {}\nprops per entity     avg {:.2}  max {}  min {}\nsimilarity tree      {} nodes, {} levels\nrelatedness tree     {} nodes, {} levels\npool                 {} entries\n",
            c.documents,
            c.chunks,
            c.entities,
            c.propositions,
            c.entity_propositions,
            a.count,
            a.avg_members,
            a.max_members,
            a.min_members,
            c.similarity_nodes,
            c.similarity_levels,
            c.relatedness_nodes,
            c.relatedness_levels,
            c.pool_size,
        )
    }
}
