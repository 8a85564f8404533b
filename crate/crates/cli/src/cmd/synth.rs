use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use factcheck_core::synth::{synth_articles, synth_corpus, synth_cue_claims, synth_eval_claims, synth_fever, SynthConfig};
use serde_json::json;

use crate::ctx::Ctx;

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    articles: usize,
    /// Body paragraphs per article, besides the headline
    #[arg(long, default_value_t = 3)]
    paragraphs: usize,
    #[arg(long, default_value_t = 150)]
    claims: usize,
    #[arg(long, default_value_t = 300)]
    cue_claims: usize,
}

/// Writes a deterministic fixture: articles, evaluation claims, FEVER-style
/// claims with an alignment and target documents, and cue-analysis claims.
pub fn run(ctx: &mut Ctx, args: SynthArgs) -> Result<()> {
    ctx.validated()?;
    let seed = ctx.config.seed;
    let cfg = SynthConfig { articles: args.articles, paragraphs_per_article: args.paragraphs, seed };
    let corpus = synth_corpus(&cfg)?;
    let out = &args.out;
    ctx.write_jsonl(&out.join("articles.jsonl"), &synth_articles(&cfg), &[])?;
    ctx.write_jsonl(&out.join("claims.jsonl"), &synth_eval_claims(&corpus, args.claims, seed), &[])?;
    let fever = synth_fever(&corpus, args.claims, seed.wrapping_add(1));
    ctx.write_jsonl(&out.join("fever_claims.jsonl"), &fever.claims, &[])?;
    ctx.write_text(&out.join("alignment.tsv"), &fever.alignment_tsv, &[])?;
    let target: Vec<_> = fever.target.iter().map(|(id, text)| json!({"id": id, "text": text})).collect();
    ctx.write_jsonl(&out.join("target.jsonl"), &target, &[])?;
    let cues: Vec<_> = synth_cue_claims(args.cue_claims, seed).into_iter().map(|(c, l)| json!({"claim": c, "label": l})).collect();
    ctx.write_jsonl(&out.join("cue_claims.jsonl"), &cues, &[])?;
    eprintln!("wrote fixture with {} paragraphs to {}", corpus.len(), out.display());
    Ok(())
}
