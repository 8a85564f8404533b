use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::Args;
use factcheck_core::annotation::router;
use factcheck_core::pipeline::{scoring_router, LexicalOverlapScorer};

use crate::ctx::{usage, Ctx};

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long)]
    state: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    bind: Option<String>,
    /// TOKEN=ANNOTATOR; repeatable, adds to the config's tokens
    #[arg(long)]
    token: Vec<String>,
}

#[derive(Args, Debug)]
pub struct ServeScorerArgs {
    #[arg(long)]
    bind: Option<String>,
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

async fn listen(bind: &str, app: axum::Router) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await.with_context(|| format!("binding {bind}"))?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await?;
    Ok(())
}

pub fn run(ctx: &mut Ctx, args: ServeArgs) -> Result<()> {
    if let Some(b) = args.bind {
        ctx.config.service.bind = b;
    }
    for t in &args.token {
        let (token, who) = t.split_once('=').ok_or_else(|| usage(format!("--token must be TOKEN=ANNOTATOR, got {t:?}")))?;
        ctx.config.service.tokens.insert(token.to_string(), who.to_string());
    }
    ctx.validated()?;
    if ctx.config.service.tokens.is_empty() {
        return Err(usage("no annotator tokens: pass --token or set service.tokens"));
    }
    let (service, _) = super::annotate::open_service(ctx, args.state, args.corpus)?;
    let app = router(service, ctx.config.service.tokens.clone());
    runtime()?.block_on(listen(&ctx.config.service.bind, app))
}

/// Serves the built-in lexical scorer for `pipeline eval --scorer URL`.
pub fn run_scorer(ctx: &mut Ctx, args: ServeScorerArgs) -> Result<()> {
    if let Some(b) = args.bind {
        ctx.config.service.bind = b;
    }
    ctx.validated()?;
    let app = scoring_router(Arc::new(LexicalOverlapScorer::default()));
    runtime()?.block_on(listen(&ctx.config.service.bind, app))
}
