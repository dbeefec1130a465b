//! Content-addressed response cache.
//!
//! Records live under `<dir>/completions/<k[..2]>/<k>.json` and
//! `<dir>/embeddings/<k[..2]>/<k>.json`. An in-memory layer fronts the
//! directory; without a directory the cache is memory-only.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::TokenUsage;
use crate::error::Result;
use crate::jsonl::write_atomic;
use crate::text::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedCompletion {
    pub model: String,
    pub text: String,
    pub usage: TokenUsage,
    pub latency_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedEmbedding {
    pub model: String,
    pub vector: Vec<f32>,
    pub latency_seconds: f64,
}

pub fn completion_key(model: &str, prompt: &str, temperature: f32, max_tokens: u32) -> String {
    sha256_hex(&[
        b"completion",
        model.as_bytes(),
        prompt.as_bytes(),
        &temperature.to_bits().to_le_bytes(),
        &max_tokens.to_le_bytes(),
    ])
}

pub fn embedding_key(model: &str, text: &str) -> String {
    sha256_hex(&[b"embedding", model.as_bytes(), text.as_bytes()])
}

#[derive(Debug, Default)]
pub struct ResponseCache {
    dir: Option<PathBuf>,
    completions: Mutex<HashMap<String, CachedCompletion>>,
    embeddings: Mutex<HashMap<String, CachedEmbedding>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Self {
        ResponseCache {
            dir: Some(dir.into()),
            ..Self::default()
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn path(&self, kind: &str, key: &str) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(kind).join(&key[..2]).join(format!("{key}.json")))
    }

    fn load<T: for<'de> Deserialize<'de>>(&self, kind: &str, key: &str) -> Option<T> {
        let path = self.path(kind, key)?;
        let raw = fs::read(&path).ok()?;
        // unreadable records are treated as misses and overwritten later
        serde_json::from_slice(&raw).ok()
    }

    fn store<T: Serialize>(&self, kind: &str, key: &str, rec: &T) -> Result<()> {
        if let Some(path) = self.path(kind, key) {
            let bytes = serde_json::to_vec(rec)
                .map_err(|e| crate::Error::Internal(format!("cache serialize: {e}")))?;
            write_atomic(&path, &bytes)?;
        }
        Ok(())
    }

    pub fn get_completion(&self, key: &str) -> Option<CachedCompletion> {
        if let Some(hit) = self.completions.lock().get(key) {
            return Some(hit.clone());
        }
        let rec: CachedCompletion = self.load("completions", key)?;
        self.completions.lock().insert(key.to_string(), rec.clone());
        Some(rec)
    }

    pub fn put_completion(&self, key: &str, rec: CachedCompletion) -> Result<()> {
        self.store("completions", key, &rec)?;
        self.completions.lock().insert(key.to_string(), rec);
        Ok(())
    }

    pub fn get_embedding(&self, key: &str) -> Option<CachedEmbedding> {
        if let Some(hit) = self.embeddings.lock().get(key) {
            return Some(hit.clone());
        }
        let rec: CachedEmbedding = self.load("embeddings", key)?;
        self.embeddings.lock().insert(key.to_string(), rec.clone());
        Some(rec)
    }

    pub fn put_embedding(&self, key: &str, rec: CachedEmbedding) -> Result<()> {
        self.store("embeddings", key, &rec)?;
        self.embeddings.lock().insert(key.to_string(), rec);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_records_replay_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let key = completion_key("m", "prompt", 0.0, 16);
        let rec = CachedCompletion {
            model: "m".into(),
            text: "answer \u{2014} with \"quotes\"\n".into(),
            usage: TokenUsage::default(),
            latency_seconds: 0.25,
        };
        ResponseCache::on_disk(dir.path())
            .put_completion(&key, rec.clone())
            .unwrap();
        // fresh instance, so the hit must come from disk
        let got = ResponseCache::on_disk(dir.path()).get_completion(&key).unwrap();
        assert_eq!(got, rec);
    }

    #[test]
    fn keys_depend_on_every_field() {
        let base = completion_key("m", "p", 0.0, 16);
        assert_ne!(base, completion_key("m2", "p", 0.0, 16));
        assert_ne!(base, completion_key("m", "p2", 0.0, 16));
        assert_ne!(base, completion_key("m", "p", 0.5, 16));
        assert_ne!(base, completion_key("m", "p", 0.0, 17));
        assert_eq!(base, completion_key("m", "p", 0.0, 16));
    }
}
