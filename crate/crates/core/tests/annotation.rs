use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use factcheck_core::annotation::{
    router, AnnotationService, CorrectiveAnnotation, DictionaryStatus, FoldPrediction, LabelOutcome, ManualClock, MutationType, Resolution, ServiceConfig,
};
use factcheck_core::corpus::Corpus;
use factcheck_core::dictionary::{CapitalizationNer, DictionaryBuilder, DictionaryParams};
use factcheck_core::error::Error;
use factcheck_core::retrieval::HashingEmbedder;
use factcheck_core::synth::{synth_corpus, SynthConfig};
use factcheck_core::{Label, Split};
use http_body_util::BodyExt;
use tower::ServiceExt;

const T0: i64 = 1_700_000_000;

fn fixture() -> (Arc<Corpus>, Arc<DictionaryBuilder>) {
    let corpus = Arc::new(synth_corpus(&SynthConfig::default()).unwrap());
    let dicts = DictionaryBuilder::from_corpus(
        &corpus,
        1 << 16,
        Arc::new(HashingEmbedder::new(64)),
        Arc::new(CapitalizationNer),
        DictionaryParams::default(),
    )
    .unwrap();
    (corpus, Arc::new(dicts))
}

fn service(config: ServiceConfig) -> (AnnotationService, Arc<ManualClock>) {
    let (corpus, dicts) = fixture();
    let clock = Arc::new(ManualClock::new(T0));
    (AnnotationService::new(corpus, dicts, clock.clone(), config).unwrap(), clock)
}

fn paragraph_ids(s: &AnnotationService, n: usize) -> Vec<String> {
    s.corpus().paragraphs().filter(|p| p.rank > 0).take(n).map(|p| p.paragraph_id.clone()).collect()
}

/// One accepted paragraph, an initial claim by `author` and `n` mutations of it.
fn seeded(s: &AnnotationService, author: &str, n: usize) -> Vec<String> {
    let pid = &paragraph_ids(s, 1)[0];
    s.preselect("curator", pid, true).unwrap();
    let task = s.next_extraction_task(author).unwrap();
    let c = s.submit_claim(author, &task.paragraph.paragraph_id, "Novak met Svoboda in Brno").unwrap();
    let muts: Vec<(String, MutationType)> =
        (0..n).map(|i| (format!("Novak met Svoboda in Brno {i} times"), MutationType::Specify)).collect();
    let out = s.submit_mutations(author, &c.id, &muts).unwrap();
    s.wait_idle();
    out.claims.into_iter().map(|c| c.id).collect()
}

fn label(s: &AnnotationService, who: &str, l: Label) -> (String, String) {
    let task = s.next_labeling_task(who).unwrap();
    let ev = if l == Label::Nei { vec![] } else { vec![vec![task.source.paragraph_id.clone()]] };
    let a = s.submit_label(who, &task.claim.id, l, &ev, 12.0).unwrap();
    (task.claim.id, a.id)
}

#[test]
fn extraction_leases_expire_and_block_others() {
    let (s, clock) = service(ServiceConfig::default());
    let pid = paragraph_ids(&s, 1).remove(0);
    s.preselect("cur", &pid, true).unwrap();
    let t = s.next_extraction_task("alice").unwrap();
    assert_eq!(t.paragraph.paragraph_id, pid);
    assert_eq!(t.scope.ids().next(), Some(pid.as_str()));
    // Resumes rather than handing out a second lease.
    assert_eq!(s.next_extraction_task("alice").unwrap().paragraph.paragraph_id, pid);
    assert!(matches!(s.next_extraction_task("bob"), Err(Error::NoTask)));
    assert!(matches!(s.submit_claim("bob", &pid, "x"), Err(Error::Forbidden(_))));

    clock.advance(1801);
    assert_eq!(s.next_extraction_task("bob").unwrap().paragraph.paragraph_id, pid);
    assert!(matches!(s.submit_claim("alice", &pid, "late claim"), Err(Error::Forbidden(_))));
    let c = s.submit_claim("bob", &pid, "  Bob's   claim ").unwrap();
    assert_eq!(c.text, "Bob's claim");
    assert!(c.is_initial());
    assert!(s.extraction_pool().is_empty());
}

#[test]
fn skipped_paragraphs_are_not_offered_again() {
    let (s, _) = service(ServiceConfig::default());
    let ids = paragraph_ids(&s, 2);
    for p in &ids {
        s.preselect("cur", p, true).unwrap();
    }
    let first = s.next_extraction_task("alice").unwrap().paragraph.paragraph_id;
    s.skip_extraction("alice", &first).unwrap();
    let second = s.next_extraction_task("alice").unwrap().paragraph.paragraph_id;
    assert_ne!(first, second);
    s.skip_extraction("alice", &second).unwrap();
    assert!(matches!(s.next_extraction_task("alice"), Err(Error::NoTask)));
    // Another annotator still sees both.
    assert!(s.next_extraction_task("bob").is_ok());
}

#[test]
fn mutations_get_background_dictionaries_and_duplicate_warnings() {
    let (s, _) = service(ServiceConfig::default());
    let pid = paragraph_ids(&s, 1).remove(0);
    s.preselect("cur", &pid, true).unwrap();
    s.next_extraction_task("alice").unwrap();
    let c = s.submit_claim("alice", &pid, "Novak met Svoboda").unwrap();
    let out = s
        .submit_mutations(
            "alice",
            &c.id,
            &[("Novak did not meet Svoboda".into(), MutationType::Negate), ("novak met svoboda".into(), MutationType::Rephrase)],
        )
        .unwrap();
    assert_eq!(out.claims.len(), 2);
    assert_eq!(out.warnings.len(), 1);
    assert!(out.claims.iter().all(|m| m.parent.as_deref() == Some(c.id.as_str()) && m.timestamp == c.timestamp));
    s.wait_idle();
    for m in &out.claims {
        assert_eq!(s.dictionary_status(&m.id), Some(DictionaryStatus::Ready));
    }
    // Mutations of mutations and "initial" as a mutation type are refused.
    let m = &out.claims[0].id;
    assert!(matches!(s.submit_mutations("alice", m, &[("x".into(), MutationType::Generalize)]), Err(Error::Validation(_))));
    assert!(matches!(s.submit_mutations("alice", &c.id, &[("x".into(), MutationType::Initial)]), Err(Error::Validation(_))));
    assert_eq!(s.claim_view(&c.id).unwrap().mutations.len(), 2);
}

#[test]
fn labeling_excludes_authors_and_repeat_annotators() {
    let (s, _) = service(ServiceConfig::default());
    let muts = seeded(&s, "alice", 1);
    assert!(matches!(s.next_labeling_task("alice"), Err(Error::NoTask)));
    let t = s.next_labeling_task("bob").unwrap();
    assert_eq!(t.claim.id, muts[0]);
    assert!(!t.dictionary_pending);
    // Leased to bob, so carol waits.
    assert!(matches!(s.next_labeling_task("carol"), Err(Error::NoTask)));
    s.submit_label("bob", &muts[0], Label::Nei, &[], 3.0).unwrap();
    assert!(matches!(s.next_labeling_task("bob"), Err(Error::NoTask)));
    assert_eq!(s.next_labeling_task("carol").unwrap().claim.id, muts[0]);
}

#[test]
fn label_validation_and_scope() {
    let (s, _) = service(ServiceConfig::default());
    let muts = seeded(&s, "alice", 1);
    let t = s.next_labeling_task("bob").unwrap();
    let src = t.source.paragraph_id.clone();
    let allowed = t.scope.allowed_evidence(s.corpus());
    let outside = s.corpus().paragraphs().map(|p| p.paragraph_id.clone()).find(|p| !allowed.contains(p)).unwrap();

    let v = |r: factcheck_core::Result<_>| matches!(r, Err(Error::Validation(_)));
    assert!(v(s.submit_label("bob", &muts[0], Label::Nei, &[vec![src.clone()]], 1.0)));
    assert!(v(s.submit_label("bob", &muts[0], Label::Supports, &[], 1.0)));
    assert!(v(s.submit_label("bob", &muts[0], Label::Supports, &[vec![]], 1.0)));
    assert!(v(s.submit_label("bob", &muts[0], Label::Supports, &[vec![outside]], 1.0)));
    assert!(v(s.submit_label("bob", &muts[0], Label::Supports, &[vec![src.clone()]], -1.0)));
    assert!(matches!(s.submit_label("carol", &muts[0], Label::Nei, &[], 1.0), Err(Error::Forbidden(_))));
    // Failed attempts left the lease intact.
    let a = s.submit_label("bob", &muts[0], Label::Supports, &[vec![src.clone()], vec![src.clone()]], 1.0).unwrap();
    assert_eq!(a.evidence, vec![vec![src]]);
}

#[test]
fn majority_merge_conflict_and_resolution() {
    let (s, _) = service(ServiceConfig::default());
    let muts = seeded(&s, "alice", 1);
    let (c, _) = label(&s, "bob", Label::Supports);
    assert_eq!(s.aggregate_label(&c).unwrap(), LabelOutcome::Agreed { label: Label::Supports });
    let (_, carol) = label(&s, "carol", Label::Refutes);
    assert_eq!(c, muts[0]);
    let conflicts = s.conflicts();
    assert_eq!(conflicts.len(), 1);
    assert!(matches!(s.merge_evidence(&c), Err(Error::Conflict(_))));
    assert!(matches!(s.export_dr(0), Err(Error::Conflict(_))));

    // Retracting nothing cannot resolve a 1:1 split.
    assert!(matches!(s.resolve_conflict("expert", &c, &Resolution::default()), Err(Error::Validation(_))));
    let rec = s
        .resolve_conflict("expert", &c, &Resolution { retract: vec![carol.clone()], ..Default::default() })
        .unwrap();
    assert_eq!(rec.verdict, Label::Supports);
    assert!(s.conflicts().is_empty());
    assert_eq!(s.merge_evidence(&c).unwrap().len(), 1);
    let rows = s.export_dr(0).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].label, Label::Supports);
    assert_eq!(s.export_nli(0).unwrap().len(), 1);
    assert_eq!(s.agreement_matrix(None).rows.len(), 1);

    // A corrective annotation counts toward the majority.
    let (c2, _) = {
        let muts = s.submit_mutations("alice", &s.claims()[0].id, &[("Brno hosted Novak".into(), MutationType::Rephrase)]).unwrap();
        s.wait_idle();
        let id = muts.claims[0].id.clone();
        let t = s.next_labeling_task("bob").unwrap();
        assert_eq!(t.claim.id, id);
        s.submit_label("bob", &id, Label::Nei, &[], 1.0).unwrap();
        (id, ())
    };
    let _ = label(&s, "carol", Label::Supports);
    assert_eq!(s.conflicts().len(), 1);
    let corr = Resolution {
        corrective: Some(CorrectiveAnnotation { label: Label::Nei, evidence: vec![] }),
        ..Default::default()
    };
    assert_eq!(s.resolve_conflict("expert", &c2, &corr).unwrap().verdict, Label::Nei);
    assert!(s.audit_log().iter().any(|e| e.action == "conflict_resolve"));
}

#[test]
fn folds_and_review_queue() {
    let (s, _) = service(ServiceConfig::default());
    let muts = seeded(&s, "alice", 30);
    for who in ["bob", "carol"] {
        for _ in 0..30 {
            label(&s, who, Label::Supports);
        }
    }
    assert!(s.conflicts().is_empty());
    let f1 = s.create_fold("ops", 5).unwrap();
    assert_eq!(f1.assignment.len(), 30);
    assert_eq!(f1.members(Split::Test).count(), 3);
    assert_eq!(f1.members(Split::Dev).count(), 3);
    let f2 = s.create_fold("ops", 5).unwrap();
    assert!(f1.traversed.is_disjoint(&f2.traversed));

    let preds: Vec<_> = f1
        .traversed
        .iter()
        .map(|c| FoldPrediction { claim_id: c.clone(), label: Label::Refutes })
        .collect();
    assert!(matches!(s.submit_predictions("m", 1, &preds[..2]), Err(Error::Validation(_))));
    let train = f1.members(Split::Train).next().unwrap().to_string();
    let mut bad = preds.clone();
    bad.push(FoldPrediction { claim_id: train, label: Label::Nei });
    assert!(matches!(s.submit_predictions("m", 1, &bad), Err(Error::Validation(_))));
    assert_eq!(s.submit_predictions("m", 1, &preds).unwrap().len(), 3);
    assert_eq!(s.review_queue().len(), 3);
    let item = s.review_queue()[0].claim_id.clone();
    s.apply_review("expert", &item, &Resolution::default(), "model wrong").unwrap();
    assert_eq!(s.review_queue().len(), 2);
    assert!(muts.contains(&item));
}

#[test]
fn persistent_service_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, dicts) = fixture();
    let clock = Arc::new(ManualClock::new(T0));
    let claim_id = {
        let s = AnnotationService::open(dir.path(), corpus.clone(), dicts.clone(), clock.clone(), ServiceConfig::default()).unwrap();
        let muts = seeded(&s, "alice", 2);
        label(&s, "bob", Label::Supports);
        muts[0].clone()
    };
    let s = AnnotationService::open(dir.path(), corpus, dicts, clock, ServiceConfig::default()).unwrap();
    assert_eq!(s.claims().len(), 3);
    assert_eq!(s.annotations().len(), 1);
    assert!(s.claim_view(&claim_id).is_ok());
    assert!(!s.audit_log().is_empty());
    assert!(dir.path().join("state.json").exists());
}

async fn call(app: &axum::Router, method: &str, uri: &str, token: Option<&str>, body: Option<serde_json::Value>) -> (StatusCode, serde_json::Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or_else(|_| serde_json::Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, value)
}

#[tokio::test(flavor = "multi_thread")]
async fn http_api_round_trip() {
    use serde_json::json;
    let (s, _) = service(ServiceConfig::default());
    let pid = paragraph_ids(&s, 1).remove(0);
    let tokens: BTreeMap<String, String> = [("ta", "alice"), ("tb", "bob"), ("tc", "carol")]
        .into_iter()
        .map(|(t, a)| (t.to_string(), a.to_string()))
        .collect();
    let app = router(s.clone(), tokens);

    assert_eq!(call(&app, "GET", "/health", None, None).await.0, StatusCode::OK);
    assert_eq!(call(&app, "GET", "/t1a/task", None, None).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(call(&app, "GET", "/t1a/task", Some("nope"), None).await.0, StatusCode::UNAUTHORIZED);
    let (st, v) = call(&app, "GET", "/t1a/task", Some("ta"), None).await;
    assert_eq!((st, v["error"].as_str()), (StatusCode::NOT_FOUND, Some("no_task")));

    let (st, v) = call(&app, "POST", "/t0/decision", Some("ta"), Some(json!({"paragraph_id": pid, "accept": true}))).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["pool"], 1);
    let (_, task) = call(&app, "GET", "/t1a/task", Some("ta"), None).await;
    assert_eq!(task["paragraph"]["paragraph_id"], pid);
    let (st, claim) = call(&app, "POST", "/t1a/claim", Some("ta"), Some(json!({"paragraph_id": pid, "text": "Novak met Svoboda"}))).await;
    assert_eq!(st, StatusCode::OK);
    let cid = claim["id"].as_str().unwrap().to_string();
    let (st, _) = call(&app, "POST", "/t1b/mutations", Some("ta"), Some(json!({"claim_id": cid, "mutations": [{"text": "x", "type": "bogus"}]}))).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    let (st, out) = call(&app, "POST", "/t1b/mutations", Some("ta"), Some(json!({"claim_id": cid, "mutations": [{"text": "Novak never met Svoboda", "type": "negate"}]}))).await;
    assert_eq!(st, StatusCode::OK);
    let mid = out["claims"][0]["id"].as_str().unwrap().to_string();
    s.wait_idle();

    for (tok, label) in [("tb", "REFUTES"), ("tc", "REFUTES")] {
        let (st, t) = call(&app, "GET", "/t2/task", Some(tok), None).await;
        assert_eq!(st, StatusCode::OK);
        assert_eq!(t["claim"]["id"], mid.as_str());
        let body = json!({"claim_id": mid, "label": label, "evidence": [[pid]], "elapsed_secs": 30.0});
        assert_eq!(call(&app, "POST", "/t2/label", Some(tok), Some(body)).await.0, StatusCode::OK);
    }
    let (st, view) = call(&app, "GET", &format!("/claims/{mid}"), Some("ta"), None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(view["outcome"]["label"], "REFUTES");
    assert_eq!(call(&app, "GET", "/claims/nope", Some("ta"), None).await.0, StatusCode::NOT_FOUND);
    let (_, same) = call(&app, "GET", &format!("/paragraphs/{pid}/same-article"), Some("ta"), None).await;
    assert_eq!(same.as_array().unwrap().len(), 4);
    assert_eq!(call(&app, "GET", "/conflicts", Some("ta"), None).await.1, json!([]));
    let (st, body) = call(&app, "GET", "/export?kind=dr&seed=1", Some("ta"), None).await;
    assert_eq!(st, StatusCode::OK);
    // A single NDJSON record is itself a JSON document.
    let line = match body {
        serde_json::Value::String(text) => serde_json::from_str(text.lines().next().unwrap()).unwrap(),
        v => v,
    };
    assert_eq!(line["id"], mid.as_str());
    assert_eq!(call(&app, "GET", "/export?kind=xml", Some("ta"), None).await.0, StatusCode::BAD_REQUEST);
    let (st, fold) = call(&app, "POST", "/folds", Some("ta"), Some(json!({"seed": 3}))).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(fold["id"], 1);
    assert_eq!(call(&app, "GET", "/review", Some("ta"), None).await.1, json!([]));
}
