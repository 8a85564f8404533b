use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Result;
use clap::Subcommand;
use factcheck_core::corpus::Corpus;
use factcheck_core::dictionary::{CapitalizationNer, DictionaryBuilder};
use factcheck_core::retrieval::HashingEmbedder;
use factcheck_core::types::parse_timestamp;

use crate::ctx::{print_json, usage, Ctx};

#[derive(Subcommand, Debug)]
pub enum DictCmd {
    /// Build the keyword and semantic dictionary of a query
    Build {
        #[arg(long)]
        q: String,
        /// Formulation time; only older paragraphs qualify
        #[arg(long)]
        ts: String,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        nkw: Option<usize>,
        #[arg(long)]
        npre: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        nsem: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn builder(ctx: &Ctx, corpus: &Corpus) -> Result<DictionaryBuilder> {
    Ok(DictionaryBuilder::from_corpus(
        corpus,
        ctx.config.retrieval.buckets,
        Arc::new(HashingEmbedder::new(ctx.config.retrieval.embedding_dim)),
        Arc::new(CapitalizationNer),
        ctx.config.dictionary_params(),
    )?)
}

pub fn run(ctx: &mut Ctx, cmd: DictCmd) -> Result<()> {
    let DictCmd::Build { q, ts, corpus, nkw, npre, k, nsem, out } = cmd;
    let d = &mut ctx.config.dictionary;
    d.n_kw = nkw.unwrap_or(d.n_kw);
    d.n_pre = npre.unwrap_or(d.n_pre);
    d.k = k.unwrap_or(d.k);
    d.n_sem = nsem.unwrap_or(d.n_sem);
    ctx.validated()?;
    let timestamp = parse_timestamp(&ts).map_err(|e| usage(format!("--ts: {e}")))?;
    let (corpus, dir) = ctx.open_corpus(corpus)?;
    let dict = builder(ctx, &corpus)?.build(&q, timestamp)?;
    match out {
        Some(out) => ctx.write_json(&out, &dict, &[&dir]),
        None => print_json(&dict),
    }
}
