//! Hashed unigram+bigram TF-IDF retriever.
//!
//! Features are case-folded unigrams and bigrams hashed into a power-of-two
//! number of buckets. Weights are `ln(1 + tf) * ln((N + 1) / (df + 1))` on both
//! the document and the query side and the score is their sparse dot product.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{check_k, top_k, Ranking, Retriever, ScoredDoc};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::text::{bucket, ngrams, tokenize_folded};
use crate::types::Timestamp;

pub const DEFAULT_BUCKETS: u32 = 1 << 24;
pub const NGRAM_ORDER: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfIndex {
    buckets: u32,
    doc_ids: Vec<String>,
    published_at: Vec<Timestamp>,
    /// bucket -> document frequency
    df: BTreeMap<u32, u32>,
    /// bucket -> (doc, weight), ascending doc
    postings: BTreeMap<u32, Vec<(u32, f64)>>,
}

/// Bucket term frequencies of a text.
pub(crate) fn bucket_counts(text: &str, buckets: u32) -> BTreeMap<u32, u32> {
    let mut counts = BTreeMap::new();
    for g in ngrams(&tokenize_folded(text), NGRAM_ORDER) {
        *counts.entry(bucket(&g, buckets)).or_insert(0) += 1;
    }
    counts
}

pub fn idf(n_docs: usize, df: u32) -> f64 {
    ((n_docs as f64 + 1.0) / (f64::from(df) + 1.0)).ln()
}

impl TfidfIndex {
    pub fn build(corpus: &Corpus, buckets: u32) -> Result<TfidfIndex> {
        let docs = corpus
            .paragraphs()
            .map(|p| (p.paragraph_id.clone(), p.published_at, p.text.as_str()));
        Self::from_documents(docs, buckets)
    }

    pub fn from_documents<'a>(
        docs: impl IntoIterator<Item = (String, Timestamp, &'a str)>,
        buckets: u32,
    ) -> Result<TfidfIndex> {
        if !buckets.is_power_of_two() {
            return Err(Error::invalid(format!("bucket count {buckets} is not a power of two")));
        }
        let mut doc_ids = Vec::new();
        let mut published_at = Vec::new();
        let mut per_doc = Vec::new();
        let mut df: BTreeMap<u32, u32> = BTreeMap::new();
        for (id, ts, text) in docs {
            let counts = bucket_counts(text, buckets);
            for b in counts.keys() {
                *df.entry(*b).or_insert(0) += 1;
            }
            doc_ids.push(id);
            published_at.push(ts);
            per_doc.push(counts);
        }
        if doc_ids.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let n = doc_ids.len();
        let mut postings: BTreeMap<u32, Vec<(u32, f64)>> = BTreeMap::new();
        for (doc, counts) in per_doc.into_iter().enumerate() {
            for (b, tf) in counts {
                let w = (f64::from(tf)).ln_1p() * idf(n, df[&b]);
                if w > 0.0 {
                    postings.entry(b).or_default().push((doc as u32, w));
                }
            }
        }
        Ok(TfidfIndex { buckets, doc_ids, published_at, df, postings })
    }

    pub fn buckets(&self) -> u32 {
        self.buckets
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

    /// Query-side weights over buckets.
    pub fn query_vector(&self, query: &str) -> BTreeMap<u32, f64> {
        let n = self.doc_ids.len();
        bucket_counts(query, self.buckets)
            .into_iter()
            .filter_map(|(b, tf)| {
                let df = *self.df.get(&b)?;
                let w = f64::from(tf).ln_1p() * idf(n, df);
                (w > 0.0).then_some((b, w))
            })
            .collect()
    }

    /// Every document with a positive score, unordered.
    pub fn score_all(&self, query: &str) -> Vec<(u32, f64)> {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for (b, qw) in self.query_vector(query) {
            if let Some(list) = self.postings.get(&b) {
                for &(doc, w) in list {
                    *acc.entry(doc).or_insert(0.0) += qw * w;
                }
            }
        }
        acc.into_iter().filter(|(_, s)| *s > 0.0).collect()
    }

    pub fn rank(&self, query: &str, k: usize) -> Result<Ranking> {
        check_k(k)?;
        let hits = top_k(self.score_all(query), k)
            .into_iter()
            .map(|(d, s)| ScoredDoc { paragraph_id: self.doc_ids[d as usize].clone(), score: s })
            .collect();
        Ok(Ranking { query_id: query.to_string(), hits })
    }
}

impl Retriever for TfidfIndex {
    fn retrieve(&self, query: &str, k: usize) -> Result<Ranking> {
        self.rank(query, k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn index(texts: &[&str]) -> TfidfIndex {
        TfidfIndex::from_documents(
            texts.iter().enumerate().map(|(i, t)| (format!("d{i}"), 0, *t)),
            1 << 20,
        )
        .unwrap()
    }

    #[test]
    fn empty_corpus_is_signalled() {
        let r = TfidfIndex::from_documents(std::iter::empty(), 1 << 10);
        assert!(matches!(r, Err(Error::EmptyIndex)));
    }

    #[test]
    fn bucket_count_must_be_power_of_two() {
        assert!(TfidfIndex::from_documents([("a".to_string(), 0, "x")], 1000).is_err());
    }

    #[test]
    fn rare_term_wins() {
        let idx = index(&["the cat sat", "the zebra ran", "the dog sat"]);
        let r = idx.rank("zebra", 3).unwrap();
        assert_eq!(r.hits[0].paragraph_id, "d1");
        assert_eq!(r.hits.len(), 1);
    }

    #[test]
    fn unknown_query_gives_empty_ranking() {
        let idx = index(&["alpha beta", "gamma"]);
        assert!(idx.rank("omega", 5).unwrap().is_empty());
        assert!(idx.rank("alpha", 0).is_err());
    }

    #[test]
    fn duplicate_documents_score_equally() {
        let idx = index(&["red apple pie", "red apple pie", "blue sky"]);
        let r = idx.rank("apple", 3).unwrap();
        assert_eq!(r.hits.len(), 2);
        assert_eq!(r.hits[0].score, r.hits[1].score);
    }
}
