//! TREC-style run and qrels files.
//!
//! Runs are written as `qid paragraph_id rank score`. The reader also accepts
//! the six-column `qid Q0 docid rank score tag` layout. Gold files are either
//! `qid docid` pairs or four-column qrels `qid iter docid relevance`, where
//! only positive relevance counts.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::eval::GoldMap;
use super::{Ranking, ScoredDoc};
use crate::error::{Error, Result};

pub fn format_run(rankings: &[Ranking]) -> String {
    let mut out = String::new();
    for r in rankings {
        for (i, h) in r.hits.iter().enumerate() {
            writeln!(out, "{} {} {} {:.6}", r.query_id, h.paragraph_id, i + 1, h.score).unwrap();
        }
    }
    out
}

/// Rankings in first-appearance order of query ids, hits sorted by rank.
pub fn parse_run(text: &str) -> Result<Vec<Ranking>> {
    let mut order: Vec<String> = Vec::new();
    let mut by_q: BTreeMap<String, Vec<(usize, ScoredDoc)>> = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() || cols[0].starts_with('#') {
            continue;
        }
        let (qid, doc, rank, score) = match cols.len() {
            4 => (cols[0], cols[1], cols[2], cols[3]),
            6 => (cols[0], cols[2], cols[3], cols[4]),
            c => return Err(Error::Format(format!("run line {}: expected 4 or 6 columns, got {c}", n + 1))),
        };
        let rank: usize = rank.parse().map_err(|_| Error::Format(format!("run line {}: bad rank", n + 1)))?;
        let score: f64 = score.parse().map_err(|_| Error::Format(format!("run line {}: bad score", n + 1)))?;
        if !by_q.contains_key(qid) {
            order.push(qid.to_string());
        }
        by_q.entry(qid.to_string())
            .or_default()
            .push((rank, ScoredDoc { paragraph_id: doc.to_string(), score }));
    }
    Ok(order
        .into_iter()
        .map(|q| {
            let mut hits = by_q.remove(&q).unwrap();
            hits.sort_by_key(|(r, _)| *r);
            Ranking { query_id: q, hits: hits.into_iter().map(|(_, h)| h).collect() }
        })
        .collect())
}

pub fn parse_gold(text: &str) -> Result<GoldMap> {
    let mut gold = GoldMap::new();
    for (n, line) in text.lines().enumerate() {
        let cols: Vec<&str> = line.split_whitespace().collect();
        match cols.len() {
            0 => continue,
            _ if cols[0].starts_with('#') => continue,
            2 => {
                gold.entry(cols[0].to_string()).or_default().insert(cols[1].to_string());
            }
            4 => {
                let rel: i64 = cols[3].parse().map_err(|_| Error::Format(format!("qrels line {}: bad relevance", n + 1)))?;
                let entry = gold.entry(cols[0].to_string()).or_default();
                if rel > 0 {
                    entry.insert(cols[2].to_string());
                }
            }
            c => return Err(Error::Format(format!("qrels line {}: expected 2 or 4 columns, got {c}", n + 1))),
        }
    }
    Ok(gold)
}
