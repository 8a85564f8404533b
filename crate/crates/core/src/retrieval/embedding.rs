//! Exact dense retrieval over unit-norm paragraph embeddings.

use serde::{Deserialize, Serialize};

use super::{check_k, top_k, Ranking, Retriever, ScoredDoc};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::text::{hash64, ngrams, tokenize_folded};
use crate::types::Timestamp;

/// Maps text to a fixed-dimension vector. Implementations must be deterministic.
pub trait Embedder: Send + Sync {
    /// Identity recorded in every index built with this embedder.
    fn tag(&self) -> String;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f32>;
}

/// Signed feature hashing of log-scaled unigram and bigram counts.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashingEmbedder { dim }
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder::new(256)
    }
}

impl Embedder for HashingEmbedder {
    fn tag(&self) -> String {
        format!("hashing-ngram-d{}", self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0f64; self.dim];
        for g in ngrams(&tokenize_folded(text), 2) {
            let h = hash64(&g);
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        }
        for x in &mut v {
            *x = x.signum() * x.abs().ln_1p();
        }
        normalize(&v)
    }
}

/// L2-normalizes; the zero vector maps to the uniform unit vector.
pub fn normalize(v: &[f64]) -> Vec<f32> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        let u = (1.0 / v.len() as f64).sqrt() as f32;
        return vec![u; v.len()];
    }
    v.iter().map(|x| (x / norm) as f32).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingIndex {
    dim: usize,
    embedder_tag: String,
    doc_ids: Vec<String>,
    published_at: Vec<Timestamp>,
    vectors: Vec<f32>,
}

impl EmbeddingIndex {
    pub fn build(corpus: &Corpus, embedder: &dyn Embedder) -> Result<EmbeddingIndex> {
        if corpus.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let mut idx = EmbeddingIndex {
            dim: embedder.dim(),
            embedder_tag: embedder.tag(),
            doc_ids: Vec::with_capacity(corpus.len()),
            published_at: Vec::with_capacity(corpus.len()),
            vectors: Vec::with_capacity(corpus.len() * embedder.dim()),
        };
        for p in corpus.paragraphs() {
            idx.push(p.paragraph_id.clone(), p.published_at, &embedder.embed(&p.text))?;
        }
        Ok(idx)
    }

    pub fn new(dim: usize, embedder_tag: impl Into<String>) -> Self {
        EmbeddingIndex {
            dim,
            embedder_tag: embedder_tag.into(),
            doc_ids: Vec::new(),
            published_at: Vec::new(),
            vectors: Vec::new(),
        }
    }

    /// Appends a vector, normalizing it to unit length.
    pub fn push(&mut self, id: String, published_at: Timestamp, vector: &[f32]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::invalid(format!("vector has dimension {}, index expects {}", vector.len(), self.dim)));
        }
        let v: Vec<f64> = vector.iter().map(|&x| f64::from(x)).collect();
        self.vectors.extend(normalize(&v));
        self.doc_ids.push(id);
        self.published_at.push(published_at);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embedder_tag(&self) -> &str {
        &self.embedder_tag
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn doc_id(&self, doc: u32) -> &str {
        &self.doc_ids[doc as usize]
    }

    pub fn published_at(&self, doc: u32) -> Timestamp {
        self.published_at[doc as usize]
    }

    pub fn vector(&self, doc: u32) -> &[f32] {
        let s = doc as usize * self.dim;
        &self.vectors[s..s + self.dim]
    }

    pub fn position(&self, id: &str) -> Option<u32> {
        self.doc_ids.iter().position(|d| d == id).map(|i| i as u32)
    }

    fn check_query(&self, query: &[f32]) -> Result<Vec<f32>> {
        if query.len() != self.dim {
            return Err(Error::invalid(format!("query has dimension {}, index expects {}", query.len(), self.dim)));
        }
        let v: Vec<f64> = query.iter().map(|&x| f64::from(x)).collect();
        Ok(normalize(&v))
    }

    /// Cosine similarity of every admitted document, unordered.
    pub fn scan(&self, query: &[f32], mut admit: impl FnMut(u32) -> bool) -> Result<Vec<(u32, f64)>> {
        let q = self.check_query(query)?;
        Ok((0..self.doc_ids.len() as u32)
            .filter(|&d| admit(d))
            .map(|d| (d, dot(&q, self.vector(d))))
            .collect())
    }

    /// Top-k documents by cosine similarity among those passing `admit`.
    pub fn search_filtered(&self, query: &[f32], k: usize, admit: impl FnMut(u32) -> bool) -> Result<Vec<(u32, f64)>> {
        check_k(k)?;
        Ok(top_k(self.scan(query, admit)?, k))
    }

    pub fn semantic_rank(&self, query: &[f32], k: usize) -> Result<Ranking> {
        let hits = self
            .search_filtered(query, k, |_| true)?
            .into_iter()
            .map(|(d, s)| ScoredDoc { paragraph_id: self.doc_ids[d as usize].clone(), score: s })
            .collect();
        Ok(Ranking { query_id: String::new(), hits })
    }
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

/// Text retriever pairing an index with the embedder that built it.
pub struct SemanticRetriever<'a> {
    pub index: &'a EmbeddingIndex,
    pub embedder: &'a dyn Embedder,
}

impl Retriever for SemanticRetriever<'_> {
    fn retrieve(&self, query: &str, k: usize) -> Result<Ranking> {
        let mut r = self.index.semantic_rank(&self.embedder.embed(query), k)?;
        r.query_id = query.to_string();
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stored_vector_scores_one() {
        let mut idx = EmbeddingIndex::new(3, "test");
        idx.push("a".into(), 0, &[1.0, 2.0, 2.0]).unwrap();
        idx.push("b".into(), 0, &[0.0, 1.0, -1.0]).unwrap();
        let r = idx.semantic_rank(&[1.0, 2.0, 2.0], 2).unwrap();
        assert_eq!(r.hits[0].paragraph_id, "a");
        assert!((r.hits[0].score - 1.0).abs() < 1e-6);
        // b is orthogonal to the query
        assert!(r.hits[1].score.abs() < 1e-6);
    }

    #[test]
    fn dimension_mismatch_is_an_argument_error() {
        let idx = EmbeddingIndex::new(3, "test");
        assert!(matches!(idx.semantic_rank(&[1.0, 0.0], 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn hashing_embedder_is_unit_norm() {
        let e = HashingEmbedder::new(64);
        for t in ["Prague hosts a summit", "", "!!!"] {
            let v = e.embed(t);
            let n: f64 = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum();
            assert!((n - 1.0).abs() < 1e-6, "{t:?}");
        }
        assert_eq!(e.embed("a b"), e.embed("A  B"));
    }
}
