//! Keyword and semantic ranking over paragraph corpora, plus retrieval evaluation.

mod bm25;
mod embedding;
mod eval;
mod persist;
mod tfidf;
pub mod trec;

pub use bm25::{Bm25Index, Bm25Params};
pub use embedding::{Embedder, EmbeddingIndex, HashingEmbedder, SemanticRetriever};
pub use eval::{
    default_b_grid, default_k1_grid, grid_search_bm25, mrr_at_k, reciprocal_rank, GridPoint, GridSearch,
    GoldMap, GridSearchResult, MrrReport, DEFAULT_MRR_KS,
};
pub use persist::{load_index, peek_kind, save_index, IndexKind};
pub use tfidf::{TfidfIndex, DEFAULT_BUCKETS};

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub paragraph_id: String,
    pub score: f64,
}

/// Hits for one query in descending score order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub query_id: String,
    pub hits: Vec<ScoredDoc>,
}

impl Ranking {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.hits.iter().map(|h| h.paragraph_id.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn len(&self) -> usize {
        self.hits.len()
    }
}

/// Anything that turns a text query into a ranking.
pub trait Retriever: Send + Sync {
    fn retrieve(&self, query: &str, k: usize) -> Result<Ranking>;
}

/// Sorts `(doc, score)` by descending score then ascending doc number and keeps `k`.
pub fn top_k(mut scored: Vec<(u32, f64)>, k: usize) -> Vec<(u32, f64)> {
    let cmp = |a: &(u32, f64), b: &(u32, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    if k == 0 {
        return Vec::new();
    }
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, cmp);
        scored.truncate(k);
    }
    scored.sort_unstable_by(cmp);
    scored
}

pub(crate) fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(crate::Error::invalid("k must be at least 1"));
    }
    Ok(())
}
