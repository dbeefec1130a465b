//! Run configuration: a TOML file, environment overrides for secrets, and
//! command-line overrides applied on top.
//!
//! ```toml
//! corpus = "data/corpus.jsonl"
//! qa = "data/qa.jsonl"
//! index_dir = "index"
//! cache_dir = ".cache"
//! backend = "mock"            # or "live"
//! seed = 0
//!
//! [model]
//! endpoint = "https://api.openai.com/v1"
//! chat_model = "gpt-4o"
//! embedding_model = "text-embedding-3-small"
//!
//! [tree]
//! level_cap = 4
//!
//! [tree.clustering]
//! threshold = 0.1
//!
//! [pool]
//! flags = ["sim_chunk", "sim_summary", "rel_aggregate", "rel_summary"]
//! retriever = "dense"
//! top_k = 20
//! ```
//!
//! `SIRERAG_API_KEY` (or `OPENAI_API_KEY`) supplies the key and
//! `SIRERAG_ENDPOINT` overrides the endpoint.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::aggregation::DEFAULT_AGGREGATE_TOKEN_CAP;
use crate::corpus::DEFAULT_MAX_CHUNK_TOKENS;
use crate::error::{Error, Result};
use crate::gateway::cache::ResponseCache;
use crate::gateway::http::{OpenAiBackend, DEFAULT_ENDPOINT};
use crate::gateway::{Backend, Gateway, GatewaySettings, MockBackend};
use crate::pool::PoolConfig;
use crate::tree::TreeConfig;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Live,
    #[default]
    Mock,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Live => "live",
            BackendKind::Mock => "mock",
        })
    }
}

impl FromStr for BackendKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "live" => Ok(BackendKind::Live),
            "mock" => Ok(BackendKind::Mock),
            other => Err(Error::Config(format!("unknown backend `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub endpoint: String,
    /// Never written to manifests.
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub timeout_secs: u64,
    #[serde(flatten)]
    pub gateway: GatewaySettings,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            endpoint: DEFAULT_ENDPOINT.into(),
            api_key: None,
            timeout_secs: 120,
            gateway: GatewaySettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub qa: Option<PathBuf>,
    /// Question-cluster file for the coverage study.
    pub clusters: Option<PathBuf>,
    pub index_dir: PathBuf,
    pub cache_dir: Option<PathBuf>,
    pub backend: BackendKind,
    pub seed: u64,
    pub max_chunk_tokens: usize,
    pub aggregate_token_cap: usize,
    /// Embed entity-bearing propositions so raw-proposition pools can be
    /// assembled at query time.
    pub embed_propositions: bool,
    pub model: ModelConfig,
    pub tree: TreeConfig,
    pub pool: PoolConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: None,
            qa: None,
            clusters: None,
            index_dir: PathBuf::from("index"),
            cache_dir: None,
            backend: BackendKind::Mock,
            seed: 0,
            max_chunk_tokens: DEFAULT_MAX_CHUNK_TOKENS,
            aggregate_token_cap: DEFAULT_AGGREGATE_TOKEN_CAP,
            embed_propositions: true,
            model: ModelConfig::default(),
            tree: TreeConfig::default(),
            pool: PoolConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(raw: &str) -> Result<Self> {
        toml::from_str(raw).map_err(|e| Error::Config(format!("config: {e}")))
    }

    /// Read a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&raw)?;
        if let Some(base) = path.parent() {
            let fix = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            cfg.corpus.as_mut().map(fix);
            cfg.qa.as_mut().map(fix);
            cfg.clusters.as_mut().map(fix);
            cfg.cache_dir.as_mut().map(fix);
            fix(&mut cfg.index_dir);
        }
        Ok(cfg)
    }

    pub fn apply_env(&mut self) {
        self.apply_env_from(|k| std::env::var(k).ok());
    }

    pub fn apply_env_from(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(key) = get("SIRERAG_API_KEY").or_else(|| get("OPENAI_API_KEY")) {
            if !key.trim().is_empty() {
                self.model.api_key = Some(key.trim().to_string());
            }
        }
        if let Some(ep) = get("SIRERAG_ENDPOINT") {
            if !ep.trim().is_empty() {
                self.model.endpoint = ep.trim().to_string();
            }
        }
    }

    /// Propagate the run seed into the clustering config.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.tree.clustering.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.pool.validate()?;
        if self.tree.level_cap == 0 {
            return Err(Error::Config("tree.level_cap must be at least 1".into()));
        }
        let t = self.tree.clustering.threshold;
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::Config(format!("clustering threshold {t} must be in (0, 1)")));
        }
        if self.aggregate_token_cap == 0 {
            return Err(Error::Config("aggregate_token_cap must be positive".into()));
        }
        Ok(())
    }

    pub fn cache(&self) -> ResponseCache {
        match &self.cache_dir {
            Some(dir) => ResponseCache::on_disk(dir),
            None => ResponseCache::in_memory(),
        }
    }

    /// Gateway for the configured backend. The mock backend names its own
    /// models so cached mock output never collides with live output.
    pub fn gateway(&self) -> Result<Gateway> {
        let (backend, settings): (Arc<dyn Backend>, GatewaySettings) = match self.backend {
            BackendKind::Mock => (
                Arc::new(MockBackend::default()),
                GatewaySettings {
                    chat_model: "mock".into(),
                    embedding_model: "mock-hash-256".into(),
                    ..self.model.gateway.clone()
                },
            ),
            BackendKind::Live => {
                if self.model.api_key.is_none() {
                    tracing::warn!("no API key set (SIRERAG_API_KEY / OPENAI_API_KEY)");
                }
                (
                    Arc::new(OpenAiBackend::new(
                        &self.model.endpoint,
                        self.model.api_key.clone(),
                        Duration::from_secs(self.model.timeout_secs),
                    )?),
                    self.model.gateway.clone(),
                )
            }
        };
        Ok(Gateway::new(backend, self.cache(), settings))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::{Origin, RetrieverKind};

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::from_toml(
            r#"
            corpus = "c.jsonl"
            backend = "live"
            seed = 7
            [model]
            chat_model = "gpt-4o-mini"
            [tree.clustering]
            threshold = 0.2
            [pool]
            flags = ["sim_chunk", "raw_proposition"]
            retriever = "bm25"
            top_k = 5
            "#,
        )
        .unwrap();
        assert_eq!(cfg.backend, BackendKind::Live);
        assert_eq!(cfg.model.gateway.chat_model, "gpt-4o-mini");
        assert_eq!(cfg.model.gateway.embedding_model, "text-embedding-3-small");
        assert_eq!(cfg.tree.clustering.threshold, 0.2);
        assert_eq!(cfg.tree.level_cap, 4);
        assert!(cfg.pool.flags.contains(Origin::RawProposition));
        assert_eq!(cfg.pool.retriever, RetrieverKind::Bm25);
        assert!(RunConfig::from_toml("bogus = = 1").is_err());
    }

    #[test]
    fn env_supplies_the_key() {
        let mut cfg = RunConfig::default();
        cfg.apply_env_from(|k| (k == "OPENAI_API_KEY").then(|| "sk-x".to_string()));
        assert_eq!(cfg.model.api_key.as_deref(), Some("sk-x"));
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(!json.contains("sk-x"));
    }
}
