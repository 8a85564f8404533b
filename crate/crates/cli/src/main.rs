mod cmd;
mod ctx;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use factcheck_core::config::RunConfig;

use crate::ctx::{print_json, usage, Ctx, Usage};

#[derive(Parser, Debug)]
#[command(name = "factcheck", version, about = "Build, annotate and evaluate fact-verification datasets")]
struct Cli {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Log more; repeat for debug output
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ingest and inspect the article corpus
    #[command(subcommand)]
    Corpus(cmd::corpus::CorpusCmd),
    /// Build indexes, run retrieval and score runs
    #[command(subcommand)]
    Retrieve(cmd::retrieve::RetrieveCmd),
    /// Build a paragraph dictionary for a claim
    #[command(subcommand)]
    Dict(cmd::dict::DictCmd),
    /// Carry an existing dataset over to the target corpus
    #[command(subcommand)]
    Localize(cmd::localize::LocalizeCmd),
    /// Drive the annotation workflow against a state directory
    Annotate(cmd::annotate::AnnotateArgs),
    /// Serve the annotation API over HTTP
    Serve(cmd::serve::ServeArgs),
    /// Inter-annotator agreement and cue analysis
    #[command(subcommand)]
    Analyze(cmd::analyze::AnalyzeCmd),
    /// End-to-end verification pipeline
    #[command(subcommand)]
    Pipeline(cmd::pipeline::PipelineCmd),
    /// Write a small deterministic fixture
    Synth(cmd::synth::SynthArgs),
    /// Print the effective configuration
    Config,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(w) = cli.workers {
        config.workers = w;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli)?;
    if config.workers > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(config.workers).build_global()?;
    }
    let mut ctx = Ctx { config, argv: std::env::args().collect() };
    match cli.cmd {
        Command::Corpus(c) => cmd::corpus::run(&mut ctx, c),
        Command::Retrieve(c) => cmd::retrieve::run(&mut ctx, c),
        Command::Dict(c) => cmd::dict::run(&mut ctx, c),
        Command::Localize(c) => cmd::localize::run(&mut ctx, c),
        Command::Annotate(a) => cmd::annotate::run(&mut ctx, a),
        Command::Serve(a) => cmd::serve::run(&mut ctx, a),
        Command::Analyze(c) => cmd::analyze::run(&mut ctx, c),
        Command::Pipeline(c) => cmd::pipeline::run(&mut ctx, c),
        Command::Synth(a) => cmd::synth::run(&mut ctx, a),
        Command::Config => {
            ctx.validated()?;
            let mut shown = ctx.config.clone();
            shown.service.tokens.clear();
            print_json(&shown)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let filter = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| filter.into()))
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
