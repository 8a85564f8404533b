use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Subcommand;
use factcheck_core::corpus::{Corpus, FilterConfig};

use crate::ctx::{print_json, Ctx};

#[derive(Subcommand, Debug)]
pub enum CorpusCmd {
    /// Ingest newline-delimited articles into a paragraph store
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Drop articles whose digit and list-separator share exceeds this
        #[arg(long, default_value_t = 0.5)]
        max_digit_ratio: f64,
        /// Keep byte-identical duplicate articles
        #[arg(long)]
        keep_duplicates: bool,
    },
    /// Print the statistics of a stored corpus
    Stats {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
}

pub fn run(ctx: &mut Ctx, cmd: CorpusCmd) -> Result<()> {
    match cmd {
        CorpusCmd::Ingest { input, out, max_digit_ratio, keep_duplicates } => {
            if !(0.0..=1.0).contains(&max_digit_ratio) {
                return Err(crate::ctx::usage("--max-digit-ratio must lie in [0, 1]"));
            }
            ctx.config.paths.corpus = Some(out.clone());
            ctx.validated()?;
            let reader = BufReader::new(File::open(&input).with_context(|| format!("opening {}", input.display()))?);
            let filter = FilterConfig { max_digit_ratio, drop_duplicates: !keep_duplicates };
            let (corpus, report) = Corpus::ingest(reader, filter, &out)?;
            ctx.sidecar(&out, &[&input])?;
            eprintln!(
                "read {} records, kept {} articles / {} paragraphs, rejected {}",
                report.records_read,
                report.articles_kept,
                report.paragraphs_kept,
                report.rejections.len()
            );
            print_json(corpus.stats())
        }
        CorpusCmd::Stats { corpus } => {
            let (corpus, _) = ctx.open_corpus(corpus)?;
            print_json(corpus.stats())
        }
    }
}
