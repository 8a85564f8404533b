use std::path::PathBuf;

use anyhow::Result;
use clap::Subcommand;
use factcheck_core::retrieval::{grid_search_bm25, mrr_at_k, GoldMap, GridSearch, DEFAULT_MRR_KS};
use factcheck_core::retrieval::trec::{format_run, parse_gold, parse_run};
use factcheck_core::retrieval::{save_index, Bm25Index, Bm25Params, EmbeddingIndex, HashingEmbedder, IndexKind, TfidfIndex};
use serde_json::json;

use crate::ctx::{parse_list, read_queries, read_text, usage, Ctx, LoadedIndex};

#[derive(Subcommand, Debug)]
pub enum RetrieveCmd {
    /// Hashed TF-IDF index over unigrams and bigrams
    BuildTfidf {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Hash buckets, a power of two
        #[arg(long)]
        buckets: Option<u32>,
    },
    /// BM25 inverted index
    BuildBm25 {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        k1: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
    },
    /// Dense index from the built-in hashing embedder
    BuildEmb {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Rank paragraphs for one query
    Query {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        q: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// Rank every claim of a JSONL file and write a TREC-style run
    Run {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        claims: PathBuf,
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write `qid paragraph_id` gold pairs from the evidence of a claims file
    Gold {
        #[arg(long)]
        claims: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// MRR@k of a run against gold pairs or qrels
    Mrr {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, default_value = "1,5,10,20")]
        k: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exhaustive (k1, b) search maximizing MRR@10
    GridBm25 {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        claims: PathBuf,
        #[arg(long)]
        k1: Option<String>,
        #[arg(long)]
        b: Option<String>,
        /// Evaluate on a seeded sample of this many claims
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn gold_of(queries: &[(String, String, Vec<Vec<String>>)]) -> GoldMap {
    queries
        .iter()
        .filter(|q| q.2.iter().any(|s| !s.is_empty()))
        .map(|(id, _, ev)| (id.clone(), ev.iter().flatten().cloned().collect()))
        .collect()
}

pub fn run(ctx: &mut Ctx, cmd: RetrieveCmd) -> Result<()> {
    match cmd {
        RetrieveCmd::BuildTfidf { corpus, out, buckets } => {
            if let Some(b) = buckets {
                ctx.config.retrieval.buckets = b;
            }
            ctx.validated()?;
            let (corpus, dir) = ctx.open_corpus(corpus)?;
            let index = TfidfIndex::build(&corpus, ctx.config.retrieval.buckets)?;
            save_index(&out, IndexKind::Tfidf, &index)?;
            ctx.sidecar(&out, &[&dir])?;
            eprintln!("indexed {} paragraphs", index.len());
        }
        RetrieveCmd::BuildBm25 { corpus, out, k1, b } => {
            let p = &mut ctx.config.retrieval.bm25;
            *p = Bm25Params { k1: k1.unwrap_or(p.k1), b: b.unwrap_or(p.b) };
            ctx.validated()?;
            let (corpus, dir) = ctx.open_corpus(corpus)?;
            let index = Bm25Index::build(&corpus, ctx.config.retrieval.bm25)?;
            save_index(&out, IndexKind::Bm25, &index)?;
            ctx.sidecar(&out, &[&dir])?;
            eprintln!("indexed {} paragraphs", index.len());
        }
        RetrieveCmd::BuildEmb { corpus, out, dim } => {
            if let Some(d) = dim {
                ctx.config.retrieval.embedding_dim = d;
            }
            ctx.validated()?;
            let (corpus, dir) = ctx.open_corpus(corpus)?;
            let index = EmbeddingIndex::build(&corpus, &HashingEmbedder::new(ctx.config.retrieval.embedding_dim))?;
            save_index(&out, IndexKind::Embedding, &index)?;
            ctx.sidecar(&out, &[&dir])?;
            eprintln!("indexed {} paragraphs", index.len());
        }
        RetrieveCmd::Query { index, q, k } => {
            let index = LoadedIndex::load(&index)?;
            let ranking = index.retriever().retrieve(&q, k)?;
            for (i, h) in ranking.hits.iter().enumerate() {
                println!("{}\t{}\t{:.6}", i + 1, h.paragraph_id, h.score);
            }
        }
        RetrieveCmd::Run { index, claims, k, out } => {
            let loaded = LoadedIndex::load(&index)?;
            let retriever = loaded.retriever();
            let queries = read_queries(&claims)?;
            let mut rankings = Vec::with_capacity(queries.len());
            for (id, text, _) in &queries {
                let mut r = retriever.retrieve(text, k)?;
                r.query_id = id.clone();
                rankings.push(r);
            }
            ctx.write_text(&out, &format_run(&rankings), &[&index, &claims])?;
        }
        RetrieveCmd::Gold { claims, out } => {
            let gold = gold_of(&read_queries(&claims)?);
            let text: String = gold.iter().flat_map(|(q, ids)| ids.iter().map(move |p| format!("{q} {p}\n"))).collect();
            ctx.write_text(&out, &text, &[&claims])?;
        }
        RetrieveCmd::Mrr { runs, gold, k, out } => {
            let ks: Vec<usize> = parse_list(&k)?;
            let ks = if ks.is_empty() { DEFAULT_MRR_KS.to_vec() } else { ks };
            let report = mrr_at_k(&parse_run(&read_text(&runs)?)?, &parse_gold(&read_text(&gold)?)?, &ks)?;
            for (k, v) in &report.mrr {
                println!("MRR@{k}\t{v:.2}");
            }
            if let Some(out) = out {
                ctx.write_json(&out, &report, &[&runs, &gold])?;
            }
        }
        RetrieveCmd::GridBm25 { index, claims, k1, b, sample, out } => {
            let LoadedIndex::Bm25(bm25) = LoadedIndex::load(&index)? else {
                return Err(usage("grid-bm25 needs a BM25 index"));
            };
            let records = read_queries(&claims)?;
            let gold = gold_of(&records);
            let queries: Vec<(String, String)> =
                records.into_iter().filter(|r| gold.contains_key(&r.0)).map(|(id, text, _)| (id, text)).collect();
            let mut search = GridSearch::new(&queries, &gold);
            if let Some(g) = k1 {
                search.k1_grid = parse_list(&g)?;
            }
            if let Some(g) = b {
                search.b_grid = parse_list(&g)?;
            }
            search.sample = sample;
            search.seed = ctx.config.seed;
            let result = grid_search_bm25(&bm25, &search)?;
            println!("{:>5} {:>5} {:>9}", "k1", "b", "MRR@10");
            for p in &result.table {
                println!("{:>5.2} {:>5.2} {:>9.2}", p.k1, p.b, p.mrr_at_10);
            }
            println!("best k1={} b={} MRR@10={:.2}", result.best.k1, result.best.b, result.best.mrr_at_10);
            if let Some(out) = out {
                ctx.write_json(&out, &json!({"result": result}), &[&index, &claims])?;
            }
        }
    }
    Ok(())
}
