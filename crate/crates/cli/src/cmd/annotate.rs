use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use factcheck_core::analysis::{fleiss_kappa, krippendorff_alpha};
use factcheck_core::annotation::{
    AnnotationService, CorrectiveAnnotation, ErrorTag, FoldPrediction, MutationType, Resolution, ServiceConfig, SystemClock,
};
use factcheck_core::{jsonl, Label};
use serde_json::json;

use crate::ctx::{print_json, usage, Ctx};

#[derive(Args, Debug)]
pub struct AnnotateArgs {
    /// Service state directory
    #[arg(long)]
    state: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Acting annotator id
    #[arg(long = "as", default_value = "cli")]
    annotator: String,
    #[command(subcommand)]
    cmd: AnnotateCmd,
}

/// Evidence sets as comma-separated paragraph ids, one flag per set.
#[derive(Args, Debug)]
struct ResolutionArgs {
    /// Annotation id to retract; repeatable
    #[arg(long)]
    retract: Vec<String>,
    #[arg(long)]
    corrective_label: Option<Label>,
    /// Evidence set of the corrective annotation; repeatable
    #[arg(long)]
    corrective_evidence: Vec<String>,
    /// Error category, e.g. reasoning or insufficient-evidence; repeatable
    #[arg(long)]
    tag: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum AnnotateCmd {
    /// T0: accept or reject a paragraph for extraction
    Decision {
        #[arg(long)]
        paragraph: String,
        #[arg(long)]
        reject: bool,
    },
    /// T1a: lease the next paragraph to extract a claim from
    ExtractTask,
    /// T1a: submit the initial claim of a leased paragraph
    Claim {
        #[arg(long)]
        paragraph: String,
        #[arg(long)]
        text: String,
    },
    /// T1a: give a leased paragraph back and never see it again
    Skip {
        #[arg(long)]
        paragraph: String,
    },
    /// T1b: add mutations of an initial claim, each as TYPE=TEXT
    Mutations {
        #[arg(long)]
        claim: String,
        #[arg(long = "mutation", required = true)]
        mutations: Vec<String>,
    },
    /// T2: lease the next claim to label
    LabelTask,
    /// T2: label a leased claim
    Label {
        #[arg(long)]
        claim: String,
        #[arg(long)]
        label: Label,
        /// Evidence set as comma-separated paragraph ids; repeatable
        #[arg(long)]
        evidence: Vec<String>,
        #[arg(long, default_value_t = 0.0)]
        elapsed: f64,
    },
    /// Claim with its mutations, annotations and aggregate
    Show {
        #[arg(long)]
        claim: String,
    },
    /// Paragraphs of the same article
    SameArticle {
        #[arg(long)]
        paragraph: String,
    },
    /// Claims whose annotations lack a majority
    Conflicts,
    /// Resolve a conflict by retraction and/or a corrective annotation
    Resolve {
        #[arg(long)]
        claim: String,
        #[command(flatten)]
        change: ResolutionArgs,
    },
    /// List folds
    Folds,
    /// Create a fold whose test split avoids previously tested claims
    FoldCreate {
        #[arg(long)]
        seed: u64,
    },
    /// Submit model predictions {claim_id, label} for a fold's test split
    Predictions {
        #[arg(long)]
        fold: u32,
        #[arg(long)]
        file: PathBuf,
    },
    /// Open review items
    Review,
    /// Close a review item
    ReviewApply {
        #[arg(long)]
        claim: String,
        #[command(flatten)]
        change: ResolutionArgs,
        #[arg(long, default_value = "")]
        note: String,
    },
    /// Export the dataset as JSONL
    Export {
        #[arg(long, value_parser = ["dr", "nli"])]
        kind: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Krippendorff's alpha and Fleiss' kappa over mutation-claim labels
    Agreement {
        /// Count retracted annotations as this extra category
        #[arg(long)]
        retracted_category: Option<String>,
    },
}

fn evidence_sets(raw: &[String]) -> Vec<Vec<String>> {
    raw.iter()
        .map(|s| s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(str::to_string).collect())
        .collect()
}

fn resolution(a: ResolutionArgs) -> Result<Resolution> {
    let error_tags = a
        .tag
        .iter()
        .map(|t| serde_json::from_value::<ErrorTag>(json!(t)).map_err(|_| usage(format!("unknown error tag {t:?}"))))
        .collect::<Result<Vec<_>>>()?;
    if a.corrective_label.is_none() && !a.corrective_evidence.is_empty() {
        return Err(usage("--corrective-evidence needs --corrective-label"));
    }
    Ok(Resolution {
        retract: a.retract,
        corrective: a.corrective_label.map(|label| CorrectiveAnnotation { label, evidence: evidence_sets(&a.corrective_evidence) }),
        error_tags,
    })
}

pub fn open_service(ctx: &Ctx, state: Option<PathBuf>, corpus: Option<PathBuf>) -> Result<(AnnotationService, PathBuf)> {
    let state = state
        .or_else(|| ctx.config.paths.state.clone())
        .ok_or_else(|| usage("no state directory: pass --state or set paths.state"))?;
    let (corpus, _) = ctx.open_corpus(corpus)?;
    let dicts = super::dict::builder(ctx, &corpus)?;
    let config = ServiceConfig { lease_secs: ctx.config.service.lease_secs, seed: ctx.config.seed, ..ServiceConfig::default() };
    let service = AnnotationService::open(&state, Arc::new(corpus), Arc::new(dicts), Arc::new(SystemClock), config)
        .with_context(|| format!("opening state {}", state.display()))?;
    Ok((service, state))
}

pub fn run(ctx: &mut Ctx, args: AnnotateArgs) -> Result<()> {
    ctx.validated()?;
    let (s, state) = open_service(ctx, args.state, args.corpus)?;
    let who = args.annotator.as_str();
    match args.cmd {
        AnnotateCmd::Decision { paragraph, reject } => print_json(&s.preselect(who, &paragraph, !reject)?)?,
        AnnotateCmd::ExtractTask => print_json(&s.next_extraction_task(who)?)?,
        AnnotateCmd::Claim { paragraph, text } => print_json(&s.submit_claim(who, &paragraph, &text)?)?,
        AnnotateCmd::Skip { paragraph } => {
            s.skip_extraction(who, &paragraph)?;
            print_json(&json!({"skipped": paragraph}))?;
        }
        AnnotateCmd::Mutations { claim, mutations } => {
            let items = mutations
                .iter()
                .map(|m| {
                    let (kind, text) = m.split_once('=').ok_or_else(|| usage(format!("--mutation must be TYPE=TEXT, got {m:?}")))?;
                    Ok((text.to_string(), kind.parse::<MutationType>().map_err(|e| usage(e.to_string()))?))
                })
                .collect::<Result<Vec<_>>>()?;
            print_json(&s.submit_mutations(who, &claim, &items)?)?;
        }
        AnnotateCmd::LabelTask => print_json(&s.next_labeling_task(who)?)?,
        AnnotateCmd::Label { claim, label, evidence, elapsed } => {
            print_json(&s.submit_label(who, &claim, label, &evidence_sets(&evidence), elapsed)?)?
        }
        AnnotateCmd::Show { claim } => print_json(&s.claim_view(&claim)?)?,
        AnnotateCmd::SameArticle { paragraph } => print_json(&s.same_article(&paragraph)?)?,
        AnnotateCmd::Conflicts => {
            let list: Vec<_> = s.conflicts().into_iter().map(|(c, a)| json!({"claim_id": c, "annotations": a})).collect();
            print_json(&list)?;
        }
        AnnotateCmd::Resolve { claim, change } => print_json(&s.resolve_conflict(who, &claim, &resolution(change)?)?)?,
        AnnotateCmd::Folds => print_json(&s.folds())?,
        AnnotateCmd::FoldCreate { seed } => print_json(&s.create_fold(who, seed)?)?,
        AnnotateCmd::Predictions { fold, file } => {
            let preds: Vec<FoldPrediction> = jsonl::read(&file)?;
            print_json(&s.submit_predictions(who, fold, &preds)?)?;
        }
        AnnotateCmd::Review => print_json(&s.review_queue())?,
        AnnotateCmd::ReviewApply { claim, change, note } => print_json(&s.apply_review(who, &claim, &resolution(change)?, &note)?)?,
        AnnotateCmd::Export { kind, seed, out } => {
            let seed = seed.unwrap_or(ctx.config.seed);
            let state_file = state.join("state.json");
            match kind.as_str() {
                "dr" => ctx.write_jsonl(&out, &s.export_dr(seed)?, &[&state_file])?,
                _ => ctx.write_jsonl(&out, &s.export_nli(seed)?, &[&state_file])?,
            }
        }
        AnnotateCmd::Agreement { retracted_category } => {
            let m = s.agreement_matrix(retracted_category.as_deref());
            print_json(&json!({
                "items": m.rows.len(),
                "categories": m.categories,
                "krippendorff_alpha": krippendorff_alpha(&m)?,
                "fleiss_kappa": fleiss_kappa(&m).ok(),
            }))?;
        }
    }
    // Mutations queue dictionary work; let it land in the state before exiting.
    s.wait_idle();
    Ok(())
}
