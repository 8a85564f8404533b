use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Subcommand;
use factcheck_core::analysis::{cue_stats, fleiss_kappa, format_cue_table, krippendorff_alpha, CueConfig, LabelMatrix};
use factcheck_core::Label;

use crate::ctx::{read_text, Ctx};

#[derive(Subcommand, Debug)]
pub enum AnalyzeCmd {
    /// Nominal Krippendorff's alpha of an items-by-annotators matrix
    Alpha {
        #[arg(long)]
        matrix: PathBuf,
    },
    /// Fleiss' kappa of an items-by-annotators matrix
    Kappa {
        #[arg(long)]
        matrix: PathBuf,
    },
    /// Cue productivity and coverage over balanced subsamples
    Cues {
        /// JSONL records with `claim` and `label`
        #[arg(long)]
        claims: PathBuf,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
        order: u8,
        #[arg(long, default_value_t = 10)]
        subsamples: usize,
        #[arg(long, default_value_t = 20)]
        top: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_labeled(path: &Path) -> Result<Vec<(String, Label)>> {
    let mut out = Vec::new();
    for (n, line) in read_text(path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(line).with_context(|| format!("{}:{}", path.display(), n + 1))?;
        let claim = v["claim"].as_str().with_context(|| format!("{}:{}: missing claim", path.display(), n + 1))?;
        let label: Label = serde_json::from_value(v["label"].clone()).with_context(|| format!("{}:{}: bad label", path.display(), n + 1))?;
        out.push((claim.to_string(), label));
    }
    Ok(out)
}

pub fn run(ctx: &mut Ctx, cmd: AnalyzeCmd) -> Result<()> {
    ctx.validated()?;
    match cmd {
        AnalyzeCmd::Alpha { matrix } => {
            let m = LabelMatrix::parse(&read_text(&matrix)?)?;
            println!("{:.6}", krippendorff_alpha(&m)?);
        }
        AnalyzeCmd::Kappa { matrix } => {
            let m = LabelMatrix::parse(&read_text(&matrix)?)?;
            println!("{:.6}", fleiss_kappa(&m)?);
        }
        AnalyzeCmd::Cues { claims, order, subsamples, top, out } => {
            let data = read_labeled(&claims)?;
            let cfg = CueConfig { order: usize::from(order), subsamples, seed: ctx.config.seed };
            let stats = cue_stats(&data, &cfg)?;
            print!("{}", format_cue_table(&stats, top));
            if let Some(out) = out {
                ctx.write_json(&out, &stats, &[&claims])?;
            }
        }
    }
    Ok(())
}
