use std::path::PathBuf;

use anyhow::Result;
use clap::Subcommand;
use factcheck_core::jsonl;
use factcheck_core::localization::{
    build_nli_pairs, ingest_validity, localize, resplit, translate_claims, validity_sample, AlignmentTable, HttpMt,
    IdentityMt, LocalizedClaim, MtClient, SourceClaim, TargetCorpus, TranslateConfig, TranslationCache, ValidityItem,
};
use factcheck_core::retrieval::TfidfIndex;
use serde_json::json;

use crate::ctx::{print_json, read_text, Ctx};

#[derive(Subcommand, Debug)]
pub enum LocalizeCmd {
    /// Map FEVER-style claims onto the target corpus through an alignment
    Run {
        #[arg(long)]
        claims: PathBuf,
        /// Two-column TSV: source title, target document id
        #[arg(long)]
        alignment: PathBuf,
        /// JSONL target documents {id, text}
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Translate claim texts, keeping the source text alongside
    Translate {
        #[arg(long)]
        claims: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Append-only JSONL translation cache
        #[arg(long)]
        cache: PathBuf,
        /// `identity` or the URL of a JSON translation endpoint
        #[arg(long, default_value = "identity")]
        engine: String,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 4)]
        in_flight: usize,
        #[arg(long, default_value_t = 3)]
        retries: u32,
        #[arg(long, default_value_t = 500)]
        base_delay_ms: u64,
    },
    /// Re-split claims with exact per-class dev and test sizes
    Resplit {
        #[arg(long)]
        claims: PathBuf,
        #[arg(long)]
        dev_per_class: usize,
        #[arg(long)]
        test_per_class: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Build NLI (context, query, label) pairs
    Nli {
        #[arg(long)]
        claims: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw claims for manual validity annotation
    ValiditySample {
        #[arg(long)]
        claims: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize annotated validity items
    ValidityIngest {
        #[arg(long)]
        items: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_localized(path: &std::path::Path) -> Result<Vec<LocalizedClaim>> {
    Ok(jsonl::read(path)?)
}

pub fn run(ctx: &mut Ctx, cmd: LocalizeCmd) -> Result<()> {
    ctx.validated()?;
    match cmd {
        LocalizeCmd::Run { claims, alignment, target, out, report } => {
            let source = SourceClaim::read_jsonl(&claims)?;
            let table = AlignmentTable::parse_tsv(&read_text(&alignment)?)?;
            let docs = TargetCorpus::read_jsonl(&target)?;
            let (kept, rep) = localize(&source, &table, &docs);
            ctx.write_jsonl(&out, &kept, &[&claims, &alignment, &target])?;
            eprintln!("kept {} of {} claims, dropped {}", rep.kept_total(), rep.input, rep.dropped_total());
            if let Some(path) = report {
                ctx.write_json(&path, &rep, &[&claims, &alignment, &target])?;
            }
        }
        LocalizeCmd::Translate { claims, out, cache, engine, batch_size, in_flight, retries, base_delay_ms } => {
            let input = read_localized(&claims)?;
            let client: Box<dyn MtClient> = match engine.as_str() {
                "identity" => Box::new(IdentityMt),
                url => Box::new(HttpMt::new(url)?),
            };
            let mut store = TranslationCache::open(&cache)?;
            let cfg = TranslateConfig { batch_size, max_retries: retries, base_delay_ms, in_flight };
            let outcome = translate_claims(&input, client.as_ref(), &mut store, &cfg)?;
            ctx.write_jsonl(&out, &outcome.claims, &[&claims])?;
            eprintln!(
                "translated {} claims ({} client calls, {} cache hits, {} errors)",
                outcome.claims.len(),
                outcome.client_calls,
                outcome.cache_hits,
                outcome.errors.len()
            );
            for (id, msg) in &outcome.errors {
                eprintln!("  {id}: {msg}");
            }
            if !outcome.errors.is_empty() {
                anyhow::bail!("{} claims failed to translate; rerun to retry them", outcome.errors.len());
            }
        }
        LocalizeCmd::Resplit { claims, dev_per_class, test_per_class, out, report } => {
            let input = read_localized(&claims)?;
            let (split, rep) = resplit(&input, dev_per_class, test_per_class, ctx.config.seed)?;
            ctx.write_jsonl(&out, &split, &[&claims])?;
            let summary = json!({"counts": rep.counts, "shared_pages": rep.shared_pages});
            match report {
                Some(path) => ctx.write_json(&path, &summary, &[&claims])?,
                None => print_json(&summary)?,
            }
        }
        LocalizeCmd::Nli { claims, target, out } => {
            let input = read_localized(&claims)?;
            let docs = TargetCorpus::read_jsonl(&target)?;
            let index = TfidfIndex::from_documents(docs.documents(), ctx.config.retrieval.buckets)?;
            let (pairs, rep) = build_nli_pairs(&input, &docs, &index, ctx.config.seed)?;
            ctx.write_jsonl(&out, &pairs, &[&claims, &target])?;
            eprintln!("{} pairs, {} claims skipped", pairs.len(), rep.skipped.len());
        }
        LocalizeCmd::ValiditySample { claims, target, fraction, out } => {
            let input = read_localized(&claims)?;
            let docs = TargetCorpus::read_jsonl(&target)?;
            let items = validity_sample(&input, fraction, ctx.config.seed, &docs)?;
            ctx.write_jsonl(&out, &items, &[&claims, &target])?;
            eprintln!("sampled {} of {} claims", items.len(), input.len());
        }
        LocalizeCmd::ValidityIngest { items, out } => {
            let annotated: Vec<ValidityItem> = jsonl::read(&items)?;
            let report = ingest_validity(&annotated);
            match out {
                Some(path) => ctx.write_json(&path, &report, &[&items])?,
                None => print_json(&report)?,
            }
        }
    }
    Ok(())
}
