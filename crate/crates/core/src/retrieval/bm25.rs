//! Okapi BM25 over case-folded unigrams with Lucene-style IDF.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{check_k, top_k, Ranking, Retriever, ScoredDoc};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::text::tokenize_folded;
use crate::types::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 0.9, b: 0.4 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self> {
        let p = Bm25Params { k1, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k1 >= 0.0 && self.k1.is_finite()) {
            return Err(Error::invalid(format!("k1 must be >= 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::invalid(format!("b must lie in [0, 1], got {}", self.b)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    params: Bm25Params,
    doc_ids: Vec<String>,
    published_at: Vec<Timestamp>,
    doc_len: Vec<u32>,
    avg_doc_len: f64,
    /// term -> (doc, tf), ascending doc
    postings: BTreeMap<String, Vec<(u32, u32)>>,
}

/// `ln(1 + (N - df + 0.5) / (df + 0.5))`
pub fn bm25_idf(n_docs: usize, df: usize) -> f64 {
    let n = n_docs as f64;
    let df = df as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// Per-term BM25 contribution.
pub fn bm25_term(idf: f64, tf: f64, doc_len: f64, avg_doc_len: f64, p: Bm25Params) -> f64 {
    let norm = 1.0 - p.b + p.b * doc_len / avg_doc_len;
    idf * tf * (p.k1 + 1.0) / (tf + p.k1 * norm)
}

impl Bm25Index {
    pub fn build(corpus: &Corpus, params: Bm25Params) -> Result<Bm25Index> {
        let docs = corpus
            .paragraphs()
            .map(|p| (p.paragraph_id.clone(), p.published_at, p.text.as_str()));
        Self::from_documents(docs, params)
    }

    pub fn from_documents<'a>(
        docs: impl IntoIterator<Item = (String, Timestamp, &'a str)>,
        params: Bm25Params,
    ) -> Result<Bm25Index> {
        params.validate()?;
        let mut doc_ids = Vec::new();
        let mut published_at = Vec::new();
        let mut doc_len = Vec::new();
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        for (doc, (id, ts, text)) in docs.into_iter().enumerate() {
            let tokens = tokenize_folded(text);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_insert(0) += 1;
            }
            for (t, c) in tf {
                postings.entry(t).or_default().push((doc as u32, c));
            }
            doc_ids.push(id);
            published_at.push(ts);
            doc_len.push(tokens.len() as u32);
        }
        if doc_ids.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let total: u64 = doc_len.iter().map(|&l| u64::from(l)).sum();
        let avg_doc_len = (total as f64 / doc_ids.len() as f64).max(f64::MIN_POSITIVE);
        Ok(Bm25Index { params, doc_ids, published_at, doc_len, avg_doc_len, postings })
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn set_params(&mut self, params: Bm25Params) -> Result<()> {
        params.validate()?;
        self.params = params;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn doc_id(&self, doc: u32) -> &str {
        &self.doc_ids[doc as usize]
    }

    pub fn published_at(&self, doc: u32) -> Timestamp {
        self.published_at[doc as usize]
    }

    /// Unique query terms contribute once each.
    pub fn score_all_with(&self, params: Bm25Params, query: &str) -> Vec<(u32, f64)> {
        let terms: BTreeSet<String> = tokenize_folded(query).into_iter().collect();
        let n = self.doc_ids.len();
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for t in &terms {
            if let Some(list) = self.postings.get(t) {
                let idf = bm25_idf(n, list.len());
                for &(doc, tf) in list {
                    let s = bm25_term(idf, f64::from(tf), f64::from(self.doc_len[doc as usize]), self.avg_doc_len, params);
                    *acc.entry(doc).or_insert(0.0) += s;
                }
            }
        }
        acc.into_iter().collect()
    }

    pub fn rank_with(&self, params: Bm25Params, query: &str, k: usize) -> Result<Ranking> {
        check_k(k)?;
        params.validate()?;
        let hits = top_k(self.score_all_with(params, query), k)
            .into_iter()
            .map(|(d, s)| ScoredDoc { paragraph_id: self.doc_ids[d as usize].clone(), score: s })
            .collect();
        Ok(Ranking { query_id: query.to_string(), hits })
    }

    pub fn rank(&self, query: &str, k: usize) -> Result<Ranking> {
        self.rank_with(self.params, query, k)
    }
}

impl Retriever for Bm25Index {
    fn retrieve(&self, query: &str, k: usize) -> Result<Ranking> {
        self.rank(query, k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn index(texts: &[&str], p: Bm25Params) -> Bm25Index {
        Bm25Index::from_documents(texts.iter().enumerate().map(|(i, t)| (format!("d{i}"), 0, *t)), p).unwrap()
    }

    #[test]
    fn single_doc_matches() {
        let idx = index(&["prague castle"], Bm25Params::default());
        let r = idx.rank("castle", 5).unwrap();
        assert_eq!(r.hits.len(), 1);
        assert!(r.hits[0].score > 0.0);
    }

    #[test]
    fn k1_zero_is_idf_only() {
        let idx = index(&["vltava vltava vltava river", "vltava bridge", "other"], Bm25Params::new(0.0, 0.75).unwrap());
        let r = idx.rank("vltava", 3).unwrap();
        assert_eq!(r.hits.len(), 2);
        assert_eq!(r.hits[0].score, r.hits[1].score);
    }

    #[test]
    fn k_zero_and_bad_params_are_rejected() {
        let idx = index(&["a"], Bm25Params::default());
        assert!(idx.rank("a", 0).is_err());
        assert!(Bm25Params::new(-0.1, 0.5).is_err());
        assert!(Bm25Params::new(1.0, 1.5).is_err());
    }
}
