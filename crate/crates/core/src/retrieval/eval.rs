//! MRR@k evaluation and exhaustive BM25 parameter search.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Bm25Index, Bm25Params, Ranking};
use crate::error::{Error, Result};

pub const DEFAULT_MRR_KS: [usize; 4] = [1, 5, 10, 20];

/// Gold paragraph ids per query id. A hit on any member counts.
pub type GoldMap = BTreeMap<String, BTreeSet<String>>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MrrReport {
    /// k -> MRR@k in percent
    pub mrr: BTreeMap<usize, f64>,
    pub evaluated: usize,
    /// Queries that had a ranking but no gold entry; excluded from the mean.
    pub missing_gold: Vec<String>,
}

/// 1/rank of the first gold id within the first `k` positions, 0 otherwise.
pub fn reciprocal_rank<'a>(ranked: impl IntoIterator<Item = &'a str>, gold: &BTreeSet<String>, k: usize) -> f64 {
    ranked
        .into_iter()
        .take(k)
        .position(|id| gold.contains(id))
        .map_or(0.0, |p| 1.0 / (p as f64 + 1.0))
}

pub fn mrr_at_k(rankings: &[Ranking], gold: &GoldMap, ks: &[usize]) -> Result<MrrReport> {
    if ks.contains(&0) {
        return Err(Error::invalid("MRR cutoffs must be >= 1"));
    }
    let mut sums: BTreeMap<usize, f64> = ks.iter().map(|&k| (k, 0.0)).collect();
    let mut report = MrrReport::default();
    for r in rankings {
        let Some(g) = gold.get(&r.query_id) else {
            report.missing_gold.push(r.query_id.clone());
            continue;
        };
        report.evaluated += 1;
        for (&k, sum) in sums.iter_mut() {
            *sum += reciprocal_rank(r.ids(), g, k);
        }
    }
    let n = report.evaluated.max(1) as f64;
    report.mrr = sums.into_iter().map(|(k, s)| (k, 100.0 * s / n)).collect();
    Ok(report)
}

/// 0.6, 0.7, ..., 1.2
pub fn default_k1_grid() -> Vec<f64> {
    (6..=12).map(|i| f64::from(i) / 10.0).collect()
}

/// 0.5, 0.6, ..., 0.9
pub fn default_b_grid() -> Vec<f64> {
    (5..=9).map(|i| f64::from(i) / 10.0).collect()
}

#[derive(Debug, Clone)]
pub struct GridSearch<'a> {
    /// (query id, query text)
    pub queries: &'a [(String, String)],
    pub gold: &'a GoldMap,
    pub k1_grid: Vec<f64>,
    pub b_grid: Vec<f64>,
    /// Evaluate on a seeded random subset of this many queries.
    pub sample: Option<usize>,
    pub seed: u64,
}

impl<'a> GridSearch<'a> {
    pub fn new(queries: &'a [(String, String)], gold: &'a GoldMap) -> Self {
        GridSearch { queries, gold, k1_grid: default_k1_grid(), b_grid: default_b_grid(), sample: None, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub k1: f64,
    pub b: f64,
    pub mrr_at_10: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: GridPoint,
    /// Every evaluated point, k1-major ascending.
    pub table: Vec<GridPoint>,
    pub sampled_queries: usize,
}

/// Maximizes MRR@10 over the grid; ties go to the lexicographically smallest (k1, b).
pub fn grid_search_bm25(index: &Bm25Index, search: &GridSearch<'_>) -> Result<GridSearchResult> {
    if search.queries.is_empty() {
        return Err(Error::invalid("grid search needs at least one query"));
    }
    if search.k1_grid.is_empty() || search.b_grid.is_empty() {
        return Err(Error::invalid("empty parameter grid"));
    }
    let queries: Vec<&(String, String)> = match search.sample {
        Some(0) => return Err(Error::invalid("sample size must be >= 1")),
        Some(n) if n < search.queries.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(search.seed);
            let mut idx = rand::seq::index::sample(&mut rng, search.queries.len(), n).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| &search.queries[i]).collect()
        }
        _ => search.queries.iter().collect(),
    };
    let mut k1s = search.k1_grid.clone();
    let mut bs = search.b_grid.clone();
    k1s.sort_by(f64::total_cmp);
    bs.sort_by(f64::total_cmp);
    let mut points = Vec::new();
    for &k1 in &k1s {
        for &b in &bs {
            points.push(Bm25Params::new(k1, b)?);
        }
    }
    let table: Vec<GridPoint> = points
        .par_iter()
        .map(|&p| {
            let rankings = queries
                .iter()
                .map(|(qid, text)| {
                    let mut r = index.rank_with(p, text, 10)?;
                    r.query_id = qid.clone();
                    Ok(r)
                })
                .collect::<Result<Vec<_>>>()?;
            let report = mrr_at_k(&rankings, search.gold, &[10])?;
            Ok(GridPoint { k1: p.k1, b: p.b, mrr_at_10: report.mrr[&10] })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = table[0];
    for p in &table[1..] {
        if p.mrr_at_10 > best.mrr_at_10 {
            best = *p;
        }
    }
    Ok(GridSearchResult { best, table, sampled_queries: queries.len() })
}
