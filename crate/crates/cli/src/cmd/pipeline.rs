use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Subcommand, ValueEnum};
use factcheck_core::jsonl;
use factcheck_core::pipeline::{evaluate, EvalClaim, EvalConfig, LexicalOverlapScorer, Metric, Mode, NliScorer, RemoteScorer};
use serde_json::json;

use super::serve::ServeScorerArgs;
use crate::ctx::{parse_list, Ctx, LoadedIndex};

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum ModeArg {
    Se,
    Nse,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum MetricArg {
    Acc,
    F1,
}

#[derive(Subcommand, Debug)]
pub enum PipelineCmd {
    /// Retrieve, split, score and aggregate; report accuracy or macro F1 per k
    Eval {
        /// JSONL claims {id, claim, label, evidence}
        #[arg(long)]
        claims: PathBuf,
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// `local` for the built-in lexical scorer, or a scorer base URL
        #[arg(long, default_value = "local")]
        scorer: String,
        /// Concurrent requests allowed by a remote scorer
        #[arg(long)]
        scorer_concurrency: Option<usize>,
        #[arg(long, default_value = "1,5,10,20")]
        k: String,
        #[arg(long, value_enum, default_value = "nse")]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "acc")]
        metric: MetricArg,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        max_input: Option<usize>,
        #[arg(long)]
        k_s: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the built-in scorer at POST /score
    ServeScorer(ServeScorerArgs),
}

pub fn run(ctx: &mut Ctx, cmd: PipelineCmd) -> Result<()> {
    let PipelineCmd::Eval { claims, index, corpus, scorer, scorer_concurrency, k, mode, metric, lambda, max_input, k_s, out } = cmd
    else {
        let PipelineCmd::ServeScorer(args) = cmd else { unreachable!() };
        return super::serve::run_scorer(ctx, args);
    };
    let p = &mut ctx.config.pipeline;
    p.lambda = lambda.unwrap_or(p.lambda);
    p.max_input = max_input.unwrap_or(p.max_input);
    p.k_s = k_s.unwrap_or(p.k_s);
    ctx.validated()?;
    let ks: Vec<usize> = parse_list(&k)?;
    let (corpus, dir) = ctx.open_corpus(corpus)?;
    let loaded = LoadedIndex::load(&index)?;
    let scorer: Box<dyn NliScorer> = match scorer.as_str() {
        "local" => Box::new(LexicalOverlapScorer::default()),
        url => Box::new(RemoteScorer::new(url, scorer_concurrency)?),
    };
    let data: Vec<EvalClaim> = jsonl::read(&claims)?;
    let cfg = EvalConfig {
        ks: ks.clone(),
        split: ctx.config.split_config(),
        lambda: ctx.config.pipeline.lambda,
        workers: ctx.config.worker_limit(),
        batch_size: ctx.config.pipeline.batch_size,
    };
    let report = evaluate(&data, &corpus, loaded.retriever().as_ref(), scorer.as_ref(), &cfg)?;
    let (mode, metric) = (
        match mode {
            ModeArg::Se => Mode::Se,
            ModeArg::Nse => Mode::Nse,
        },
        match metric {
            MetricArg::Acc => Metric::Accuracy,
            MetricArg::F1 => Metric::F1Macro,
        },
    );
    let table = report.table(metric);
    print!("{table}");
    for (id, msg) in &report.errors {
        eprintln!("excluded {id}: {msg}");
    }
    if let Some(out) = out {
        let scores: BTreeMap<usize, f64> = ks.iter().filter_map(|&k| report.score(k, mode, metric).map(|s| (k, s))).collect();
        let doc = json!({
            "mode": mode,
            "metric": metric,
            "claims": data.len(),
            "scores": scores,
            "table": table,
            "report": report,
        });
        ctx.write_json(&out, &doc, &[&claims, &index, &dir])?;
    }
    Ok(())
}
