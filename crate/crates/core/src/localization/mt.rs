//! Machine-translation client abstraction with batching, retries and a disk cache.

use std::collections::{BTreeMap, HashMap};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::LocalizedClaim;
use crate::error::{Error, Result};

pub trait MtClient: Send + Sync {
    /// Identifies the engine and its settings; part of the cache key.
    fn engine(&self) -> String;
    /// Must return exactly one output per input, in order.
    fn translate_batch(&self, texts: &[String]) -> Result<Vec<String>>;
}

/// Returns its input unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityMt;

impl MtClient for IdentityMt {
    fn engine(&self) -> String {
        "identity".into()
    }

    fn translate_batch(&self, texts: &[String]) -> Result<Vec<String>> {
        Ok(texts.to_vec())
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MtRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MtResponse {
    pub translations: Vec<String>,
}

/// JSON engine at `POST <url>`: `{"texts": [..]}` in, `{"translations": [..]}` out.
pub struct HttpMt {
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpMt {
    pub fn new(url: &str) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| Error::Remote(e.to_string()))?;
        Ok(HttpMt { url: url.to_string(), client })
    }
}

impl MtClient for HttpMt {
    fn engine(&self) -> String {
        format!("http:{}", self.url)
    }

    fn translate_batch(&self, texts: &[String]) -> Result<Vec<String>> {
        let resp = self
            .client
            .post(&self.url)
            .json(&MtRequest { texts: texts.to_vec() })
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| Error::Remote(e.to_string()))?;
        let body: MtResponse = resp.json().map_err(|e| Error::Remote(e.to_string()))?;
        Ok(body.translations)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheRecord {
    engine: String,
    source: String,
    target: String,
}

/// Translations keyed by (engine, source text), optionally backed by an append-only JSONL file.
#[derive(Debug, Default)]
pub struct TranslationCache {
    path: Option<PathBuf>,
    entries: HashMap<(String, String), String>,
    unsaved: Vec<CacheRecord>,
}

impl TranslationCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads `path` if it exists; new entries are appended on [`flush`](Self::flush).
    pub fn open(path: &Path) -> Result<Self> {
        let mut cache = TranslationCache { path: Some(path.to_path_buf()), ..Default::default() };
        if path.exists() {
            for r in crate::jsonl::read::<CacheRecord>(path)? {
                cache.entries.insert((r.engine, r.source), r.target);
            }
        }
        Ok(cache)
    }

    pub fn get(&self, engine: &str, source: &str) -> Option<&str> {
        self.entries.get(&(engine.to_string(), source.to_string())).map(String::as_str)
    }

    pub fn insert(&mut self, engine: &str, source: &str, target: &str) {
        let key = (engine.to_string(), source.to_string());
        if self.entries.get(&key).map(String::as_str) != Some(target) {
            self.entries.insert(key, target.to_string());
            self.unsaved.push(CacheRecord { engine: engine.into(), source: source.into(), target: target.into() });
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn flush(&mut self) -> Result<()> {
        let Some(path) = &self.path else {
            self.unsaved.clear();
            return Ok(());
        };
        if self.unsaved.is_empty() {
            return Ok(());
        }
        let mut f = OpenOptions::new().create(true).append(true).open(path)?;
        let mut buf = Vec::new();
        crate::jsonl::write_to(&mut buf, &self.unsaved)?;
        f.write_all(&buf)?;
        f.sync_data()?;
        self.unsaved.clear();
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TranslateConfig {
    pub batch_size: usize,
    /// Attempts after the first failure.
    pub max_retries: u32,
    /// Delay before retry `i` is `base_delay_ms * 2^i`.
    pub base_delay_ms: u64,
    /// Batches allowed in flight at once.
    pub in_flight: usize,
}

impl Default for TranslateConfig {
    fn default() -> Self {
        TranslateConfig { batch_size: 32, max_retries: 3, base_delay_ms: 500, in_flight: 4 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TranslateOutcome {
    /// Successfully translated claims, original text kept in `source_claim`.
    pub claims: Vec<LocalizedClaim>,
    /// `(claim id, message)` for claims whose batch failed after all retries.
    pub errors: Vec<(String, String)>,
    pub client_calls: usize,
    pub cache_hits: usize,
}

fn with_retries(client: &dyn MtClient, batch: &[String], cfg: &TranslateConfig, calls: &AtomicUsize) -> Result<Vec<String>> {
    let mut attempt = 0;
    loop {
        calls.fetch_add(1, Ordering::Relaxed);
        let res = client.translate_batch(batch).and_then(|out| {
            if out.len() == batch.len() {
                Ok(out)
            } else {
                Err(Error::Remote(format!("engine returned {} texts for {}", out.len(), batch.len())))
            }
        });
        match res {
            Ok(out) => return Ok(out),
            Err(e) if attempt >= cfg.max_retries => return Err(e),
            Err(e) => {
                tracing::warn!(attempt, error = %e, "translation batch failed, retrying");
                std::thread::sleep(Duration::from_millis(cfg.base_delay_ms.saturating_mul(1 << attempt.min(20))));
                attempt += 1;
            }
        }
    }
}

/// Translates claim texts not already cached. Runs resume from the cache: a
/// failed batch leaves its claims in `errors` and a later run retries only those.
pub fn translate_claims(
    claims: &[LocalizedClaim],
    client: &dyn MtClient,
    cache: &mut TranslationCache,
    cfg: &TranslateConfig,
) -> Result<TranslateOutcome> {
    if cfg.batch_size == 0 || cfg.in_flight == 0 {
        return Err(Error::invalid("batch_size and in_flight must be >= 1"));
    }
    let engine = client.engine();
    let source_of = |c: &LocalizedClaim| c.source_claim.clone().unwrap_or_else(|| c.claim.clone());

    let mut todo: Vec<String> = Vec::new();
    let mut queued: std::collections::HashSet<String> = Default::default();
    let mut cache_hits = 0;
    for c in claims {
        let src = source_of(c);
        if cache.get(&engine, &src).is_some() {
            cache_hits += 1;
        } else if queued.insert(src.clone()) {
            todo.push(src);
        }
    }

    let batches: Vec<&[String]> = todo.chunks(cfg.batch_size).collect();
    let next = AtomicUsize::new(0);
    let calls = AtomicUsize::new(0);
    let results: Mutex<BTreeMap<usize, Result<Vec<String>>>> = Mutex::new(BTreeMap::new());
    std::thread::scope(|s| {
        for _ in 0..cfg.in_flight.min(batches.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(batch) = batches.get(i) else { break };
                let r = with_retries(client, batch, cfg, &calls);
                results.lock().unwrap().insert(i, r);
            });
        }
    });

    let mut failed: HashMap<String, String> = HashMap::new();
    for (i, r) in results.into_inner().unwrap() {
        match r {
            Ok(out) => {
                for (src, dst) in batches[i].iter().zip(out) {
                    cache.insert(&engine, src, &dst);
                }
            }
            Err(e) => {
                for src in batches[i] {
                    failed.insert(src.clone(), e.to_string());
                }
            }
        }
    }
    cache.flush()?;

    let mut outcome = TranslateOutcome { client_calls: calls.into_inner(), cache_hits, ..Default::default() };
    for c in claims {
        let src = source_of(c);
        match cache.get(&engine, &src) {
            Some(t) => outcome.claims.push(LocalizedClaim { claim: t.to_string(), source_claim: Some(src), ..c.clone() }),
            None => outcome.errors.push((c.id.clone(), failed.get(&src).cloned().unwrap_or_else(|| "not translated".into()))),
        }
    }
    Ok(outcome)
}
