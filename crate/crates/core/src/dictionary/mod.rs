//! Per-query context dictionaries.
//!
//! A dictionary `d(q)` fuses two retrieval routes, both restricted to
//! paragraphs published strictly before the query timestamp:
//!
//! * keyword part: TF-IDF queries built from every pair of named entities in
//!   `q`, fused by max score, top `n_kw`;
//! * semantic part: the `n_pre` nearest paragraphs by embedding, split into `k`
//!   clusters, then drained round-robin (nearest-to-query member first) until
//!   `n_sem` paragraphs are picked.

mod kmeans;
mod ner;
mod scope;

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use kmeans::{kmeans, KMeansConfig, KMeansResult};
pub use ner::{CapitalizationNer, EntityRecognizer, EntitySpan};
pub use scope::{assemble_scope, KnowledgeScope, ScopeEntry, ScopeOrigin};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::retrieval::{top_k, Embedder, EmbeddingIndex, TfidfIndex};
use crate::types::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DictPart {
    Keyword,
    Semantic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictEntry {
    pub paragraph_id: String,
    pub part: DictPart,
    pub score: f64,
    /// The pair query or cluster that produced this entry.
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    pub query: String,
    pub timestamp: Timestamp,
    pub keyword: Vec<DictEntry>,
    pub semantic: Vec<DictEntry>,
}

impl Dictionary {
    pub fn empty(query: &str, timestamp: Timestamp) -> Self {
        Dictionary { query: query.to_string(), timestamp, keyword: Vec::new(), semantic: Vec::new() }
    }

    /// Keyword entries first, then semantic.
    pub fn entries(&self) -> impl Iterator<Item = &DictEntry> {
        self.keyword.iter().chain(&self.semantic)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries().map(|e| e.paragraph_id.as_str())
    }

    pub fn len(&self) -> usize {
        self.keyword.len() + self.semantic.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Keyword queries from entity pairs, `"A, B"` in first-appearance order.
///
/// One entity yields that entity alone; none yields the raw query text.
pub fn pair_queries(entities: &[EntitySpan], fallback: &str) -> Vec<String> {
    match entities.len() {
        0 => vec![fallback.to_string()],
        1 => vec![entities[0].text.clone()],
        n => {
            let mut out = Vec::with_capacity(n * (n - 1) / 2);
            for i in 0..n {
                for j in i + 1..n {
                    out.push(format!("{}, {}", entities[i].text, entities[j].text));
                }
            }
            out
        }
    }
}

/// Union of pair-query rankings over paragraphs older than `timestamp`, max-fused, top `n_kw`.
pub fn keyword_dictionary(index: &TfidfIndex, queries: &[String], timestamp: Timestamp, n_kw: usize) -> Vec<DictEntry> {
    if n_kw == 0 {
        return Vec::new();
    }
    let mut best: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for (qi, q) in queries.iter().enumerate() {
        for (doc, score) in index.score_all(q) {
            if index.published_at(doc) >= timestamp {
                continue;
            }
            let slot = best.entry(doc).or_insert((score, qi));
            if score > slot.0 {
                *slot = (score, qi);
            }
        }
    }
    let scored: Vec<(u32, f64)> = best.iter().map(|(&d, &(s, _))| (d, s)).collect();
    top_k(scored, n_kw)
        .into_iter()
        .map(|(d, s)| DictEntry {
            paragraph_id: index.doc_id(d).to_string(),
            part: DictPart::Keyword,
            score: s,
            provenance: queries[best[&d].1].clone(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemanticParams {
    pub n_pre: usize,
    pub n_sem: usize,
    pub kmeans: KMeansConfig,
}

impl Default for SemanticParams {
    fn default() -> Self {
        SemanticParams { n_pre: 1024, n_sem: 4, kmeans: KMeansConfig::default() }
    }
}

/// Cluster contents ordered for round-robin extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterQueue {
    pub cluster: usize,
    /// (doc, cosine to query), best first
    pub members: Vec<(u32, f64)>,
}

/// Drains clusters cyclically, one best remaining member per visit.
/// Clusters are visited in order of their best member's similarity.
pub fn round_robin(mut clusters: Vec<ClusterQueue>, n: usize) -> Vec<(u32, f64, usize)> {
    let cmp = |a: &(u32, f64), b: &(u32, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    for c in &mut clusters {
        c.members.sort_by(cmp);
    }
    clusters.retain(|c| !c.members.is_empty());
    clusters.sort_by(|a, b| cmp(&a.members[0], &b.members[0]).then(a.cluster.cmp(&b.cluster)));
    let mut cursors = vec![0usize; clusters.len()];
    let mut out = Vec::new();
    while out.len() < n {
        let mut progressed = false;
        for (c, cur) in clusters.iter().zip(cursors.iter_mut()) {
            if out.len() == n {
                break;
            }
            if let Some(&(d, s)) = c.members.get(*cur) {
                out.push((d, s, c.cluster));
                *cur += 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    out
}

pub fn semantic_dictionary(
    index: &EmbeddingIndex,
    query_vector: &[f32],
    timestamp: Timestamp,
    params: &SemanticParams,
) -> Result<Vec<DictEntry>> {
    if params.n_sem == 0 || params.n_pre == 0 || index.is_empty() {
        if query_vector.len() != index.dim() {
            return Err(Error::invalid("query dimension does not match index"));
        }
        return Ok(Vec::new());
    }
    let candidates = index.search_filtered(query_vector, params.n_pre, |d| index.published_at(d) < timestamp)?;
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let k = if candidates.len() < params.kmeans.k { 1 } else { params.kmeans.k };
    let points: Vec<&[f32]> = candidates.iter().map(|&(d, _)| index.vector(d)).collect();
    let clustering = kmeans(&points, &KMeansConfig { k, ..params.kmeans })?;
    let mut queues: Vec<ClusterQueue> = (0..k).map(|c| ClusterQueue { cluster: c, members: Vec::new() }).collect();
    for (&(d, s), &c) in candidates.iter().zip(&clustering.assignments) {
        queues[c].members.push((d, s));
    }
    Ok(round_robin(queues, params.n_sem)
        .into_iter()
        .map(|(d, s, c)| DictEntry {
            paragraph_id: index.doc_id(d).to_string(),
            part: DictPart::Semantic,
            score: s,
            provenance: format!("cluster {c}"),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DictionaryParams {
    pub n_kw: usize,
    pub semantic: SemanticParams,
}

impl Default for DictionaryParams {
    fn default() -> Self {
        DictionaryParams { n_kw: 4, semantic: SemanticParams::default() }
    }
}

/// Produces `d(q)` for a query and its formulation timestamp.
pub trait DictionaryProvider: Send + Sync {
    fn dictionary(&self, query: &str, timestamp: Timestamp) -> Result<Dictionary>;
}

/// Combines both dictionary routes over shared, immutable indexes.
#[derive(Clone)]
pub struct DictionaryBuilder {
    tfidf: Option<Arc<TfidfIndex>>,
    embeddings: Arc<EmbeddingIndex>,
    embedder: Arc<dyn Embedder>,
    ner: Arc<dyn EntityRecognizer>,
    params: DictionaryParams,
}

impl DictionaryBuilder {
    pub fn new(
        tfidf: Option<Arc<TfidfIndex>>,
        embeddings: Arc<EmbeddingIndex>,
        embedder: Arc<dyn Embedder>,
        ner: Arc<dyn EntityRecognizer>,
        params: DictionaryParams,
    ) -> Result<Self> {
        if embeddings.embedder_tag() != embedder.tag() || embeddings.dim() != embedder.dim() {
            return Err(Error::invalid(format!(
                "embedding index was built by {:?}, not {:?}",
                embeddings.embedder_tag(),
                embedder.tag()
            )));
        }
        Ok(DictionaryBuilder { tfidf, embeddings, embedder, ner, params })
    }

    /// Builds both indexes from the corpus; an empty corpus gives empty dictionaries.
    pub fn from_corpus(
        corpus: &Corpus,
        buckets: u32,
        embedder: Arc<dyn Embedder>,
        ner: Arc<dyn EntityRecognizer>,
        params: DictionaryParams,
    ) -> Result<Self> {
        let tfidf = match TfidfIndex::build(corpus, buckets) {
            Ok(i) => Some(Arc::new(i)),
            Err(Error::EmptyIndex) => None,
            Err(e) => return Err(e),
        };
        let embeddings = match EmbeddingIndex::build(corpus, embedder.as_ref()) {
            Ok(i) => i,
            Err(Error::EmptyIndex) => EmbeddingIndex::new(embedder.dim(), embedder.tag()),
            Err(e) => return Err(e),
        };
        Self::new(tfidf, Arc::new(embeddings), embedder, ner, params)
    }

    pub fn params(&self) -> &DictionaryParams {
        &self.params
    }

    pub fn entities(&self, query: &str) -> Vec<EntitySpan> {
        self.ner.extract(query)
    }

    pub fn build(&self, query: &str, timestamp: Timestamp) -> Result<Dictionary> {
        let keyword = match &self.tfidf {
            Some(index) => {
                let queries = pair_queries(&self.ner.extract(query), query);
                keyword_dictionary(index, &queries, timestamp, self.params.n_kw)
            }
            None => Vec::new(),
        };
        let qv = self.embedder.embed(query);
        let seen: HashSet<&str> = keyword.iter().map(|e| e.paragraph_id.as_str()).collect();
        let semantic: Vec<DictEntry> = semantic_dictionary(&self.embeddings, &qv, timestamp, &self.params.semantic)?
            .into_iter()
            .filter(|e| !seen.contains(e.paragraph_id.as_str()))
            .collect();
        Ok(Dictionary { query: query.to_string(), timestamp, keyword, semantic })
    }
}

impl DictionaryProvider for DictionaryBuilder {
    fn dictionary(&self, query: &str, timestamp: Timestamp) -> Result<Dictionary> {
        self.build(query, timestamp)
    }
}
