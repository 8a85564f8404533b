//! Run-wide settings shared by every command, plus the provenance record that
//! accompanies every artifact.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dictionary::{DictionaryParams, KMeansConfig, SemanticParams};
use crate::error::{Error, Result};
use crate::pipeline::{SplitConfig, DEFAULT_LAMBDA, DEFAULT_MAX_INPUT};
use crate::retrieval::{Bm25Params, DEFAULT_BUCKETS};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Corpus store directory.
    pub corpus: Option<PathBuf>,
    /// Directory holding index files.
    pub indexes: Option<PathBuf>,
    /// Annotation service state directory; in-memory when unset.
    pub state: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSettings {
    pub buckets: u32,
    pub bm25: Bm25Params,
    pub embedding_dim: usize,
}

impl Default for RetrievalSettings {
    fn default() -> Self {
        RetrievalSettings { buckets: DEFAULT_BUCKETS, bm25: Bm25Params::default(), embedding_dim: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DictionarySettings {
    pub n_kw: usize,
    pub n_pre: usize,
    pub k: usize,
    pub n_sem: usize,
}

impl Default for DictionarySettings {
    fn default() -> Self {
        let d = DictionaryParams::default();
        DictionarySettings { n_kw: d.n_kw, n_pre: d.semantic.n_pre, k: d.semantic.kmeans.k, n_sem: d.semantic.n_sem }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSettings {
    pub lambda: f64,
    pub max_input: usize,
    pub k_s: usize,
    pub batch_size: usize,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings { lambda: DEFAULT_LAMBDA, max_input: DEFAULT_MAX_INPUT, k_s: 2, batch_size: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSettings {
    pub bind: String,
    pub lease_secs: i64,
    /// Bearer token -> annotator id.
    pub tokens: BTreeMap<String, String>,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        ServiceSettings { bind: "127.0.0.1:8080".into(), lease_secs: 1800, tokens: BTreeMap::new() }
    }
}

/// Everything a run depends on besides its input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct RunConfig {
    pub seed: u64,
    /// Upper bound on worker threads; 0 means one per core.
    pub workers: usize,
    pub paths: Paths,
    pub retrieval: RetrievalSettings,
    pub dictionary: DictionarySettings,
    pub pipeline: PipelineSettings,
    pub service: ServiceSettings,
}


fn check(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(format!("config: {what}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let r = &self.retrieval;
        check(r.buckets.is_power_of_two(), "retrieval.buckets must be a power of two")?;
        r.bm25.validate()?;
        check((1..=65_536).contains(&r.embedding_dim), "retrieval.embedding_dim must be in [1, 65536]")?;
        let d = &self.dictionary;
        check(d.n_kw <= 1_000, "dictionary.n_kw must be in [0, 1000]")?;
        check(d.n_sem <= 1_000, "dictionary.n_sem must be in [0, 1000]")?;
        check(d.k >= 1, "dictionary.k must be >= 1")?;
        check(d.n_pre >= d.k, "dictionary.n_pre must be >= dictionary.k")?;
        let p = &self.pipeline;
        check(p.lambda.is_finite() && p.lambda > 0.0 && p.lambda <= 1.0, "pipeline.lambda must be in (0, 1]")?;
        check(p.max_input >= 8, "pipeline.max_input must be >= 8")?;
        check(p.k_s >= 1, "pipeline.k_s must be >= 1")?;
        check(p.batch_size >= 1, "pipeline.batch_size must be >= 1")?;
        let s = &self.service;
        check(s.bind.parse::<std::net::SocketAddr>().is_ok(), "service.bind must be host:port")?;
        check(s.lease_secs >= 1, "service.lease_secs must be >= 1")?;
        Ok(())
    }

    pub fn dictionary_params(&self) -> DictionaryParams {
        let d = &self.dictionary;
        DictionaryParams {
            n_kw: d.n_kw,
            semantic: SemanticParams {
                n_pre: d.n_pre,
                n_sem: d.n_sem,
                kmeans: KMeansConfig { k: d.k, seed: self.seed, ..KMeansConfig::default() },
            },
        }
    }

    pub fn split_config(&self) -> SplitConfig {
        SplitConfig { max_input: self.pipeline.max_input, k_s: self.pipeline.k_s }
    }

    /// `None` when every core may be used.
    pub fn worker_limit(&self) -> Option<usize> {
        (self.workers > 0).then_some(self.workers)
    }
}

/// Written next to each artifact as `<artifact>.provenance.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    pub config: RunConfig,
    /// SHA-256 of each input file, keyed by path as given.
    pub inputs: BTreeMap<String, String>,
}

impl Provenance {
    /// Digests each input file; a directory is represented by its corpus store.
    /// Bearer tokens are left out.
    pub fn new(command: Vec<String>, mut config: RunConfig, inputs: &[&Path]) -> Result<Self> {
        config.service.tokens.clear();
        let mut digests = BTreeMap::new();
        for p in inputs {
            let file = if p.is_dir() { p.join(crate::corpus::STORE_FILE) } else { p.to_path_buf() };
            if file.is_file() {
                let bytes = std::fs::read(&file)?;
                let hex: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
                digests.insert(p.display().to_string(), hex);
            }
        }
        Ok(Provenance { tool: "factcheck".into(), version: env!("CARGO_PKG_VERSION").into(), command, config, inputs: digests })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        let mut c = RunConfig::default();
        c.pipeline.lambda = 0.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.dictionary.n_pre = 1;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.service.bind = "nowhere".into();
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.retrieval.bm25.b = 1.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut c = RunConfig::default();
        c.service.tokens.insert("t".into(), "alice".into());
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
