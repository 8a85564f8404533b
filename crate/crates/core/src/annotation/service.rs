use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::{mpsc, Arc, Condvar, Mutex, RwLock, Weak};

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::folds::ReviewItem;
use super::{normalize_evidence, Annotation, AnnotationState, Claim, ConflictRecord, ErrorTag, Fold, MutationType};
use crate::corpus::{Corpus, Paragraph};
use crate::dictionary::{assemble_scope, Dictionary, DictionaryProvider, KnowledgeScope};
use crate::error::{Error, Result};
use crate::text::normalize_whitespace;
use crate::types::{Label, Timestamp};

pub trait Clock: Send + Sync {
    /// Seconds since the Unix epoch.
    fn now(&self) -> Timestamp;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        chrono::Utc::now().timestamp()
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicI64);

impl ManualClock {
    pub fn new(t: Timestamp) -> Self {
        ManualClock(AtomicI64::new(t))
    }

    pub fn advance(&self, secs: i64) {
        self.0.fetch_add(secs, Ordering::SeqCst);
    }

    pub fn set(&self, t: Timestamp) {
        self.0.store(t, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Timestamp {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub lease_secs: i64,
    pub seed: u64,
    /// Labels per claim the scheduler aims for.
    pub target_labels: f64,
    /// Floor weight so fully labeled claims stay assignable.
    pub epsilon: f64,
    /// Compute mutation dictionaries on a worker thread instead of inline.
    pub background_precompute: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { lease_secs: 30 * 60, seed: 0, target_labels: 2.0, epsilon: 1e-3, background_precompute: true }
    }
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lease_secs <= 0 {
            return Err(Error::invalid("lease_secs must be positive"));
        }
        if !(self.target_labels.is_finite() && self.target_labels >= 0.0) {
            return Err(Error::invalid("target_labels must be finite and >= 0"));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be finite and > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub(crate) enum TaskKind {
    Extraction,
    Labeling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Lease {
    pub task: TaskKind,
    pub item: String,
    pub annotator: String,
    pub expires_at: Timestamp,
    pub scope: KnowledgeScope,
    pub dictionary_pending: bool,
}

fn lease_key(task: TaskKind, item: &str) -> String {
    match task {
        TaskKind::Extraction => format!("t1a:{item}"),
        TaskKind::Labeling => format!("t2:{item}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Decision {
    pub accepted: bool,
    pub curator: String,
    pub at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DictionaryStatus {
    Pending,
    Ready,
    Failed { message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub(crate) struct Counters {
    pub claims: u64,
    pub annotations: u64,
    pub conflicts: u64,
    pub draws: u64,
    pub audit_seq: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub(crate) struct State {
    pub decisions: BTreeMap<String, Decision>,
    pub claims: BTreeMap<String, Claim>,
    pub annotations: BTreeMap<String, Annotation>,
    pub conflicts: Vec<ConflictRecord>,
    pub folds: Vec<Fold>,
    pub review: Vec<ReviewItem>,
    pub leases: BTreeMap<String, Lease>,
    pub paragraph_dicts: BTreeMap<String, Dictionary>,
    pub claim_dicts: BTreeMap<String, Dictionary>,
    pub dict_status: BTreeMap<String, DictionaryStatus>,
    pub skips: BTreeMap<String, BTreeSet<String>>,
    pub counters: Counters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum LabelOutcome {
    Agreed { label: Label },
    Conflict { annotations: Vec<String> },
}

impl State {
    pub fn claim(&self, id: &str) -> Result<&Claim> {
        self.claims.get(id).ok_or_else(|| Error::not_found(format!("claim {id}")))
    }

    pub fn counting(&self, claim_id: &str) -> impl Iterator<Item = &Annotation> {
        let claim_id = claim_id.to_string();
        self.annotations.values().filter(move |a| a.claim_id == claim_id && a.counts())
    }

    /// Strict majority over counting annotations; `None` when there are none.
    pub fn outcome(&self, claim_id: &str) -> Option<LabelOutcome> {
        let anns: Vec<&Annotation> = self.counting(claim_id).collect();
        outcome_of(&anns)
    }

    pub fn agreed(&self, claim_id: &str) -> Option<Label> {
        match self.outcome(claim_id) {
            Some(LabelOutcome::Agreed { label }) => Some(label),
            _ => None,
        }
    }

    /// Distinct evidence sets of counting annotations that agree with the majority.
    pub fn merged_evidence(&self, claim_id: &str) -> Result<Vec<Vec<String>>> {
        match self.outcome(claim_id) {
            None => Err(Error::validation(format!("claim {claim_id} has no active annotations"))),
            Some(LabelOutcome::Conflict { .. }) => Err(Error::Conflict(claim_id.to_string())),
            Some(LabelOutcome::Agreed { label }) => {
                let mut seen = BTreeSet::new();
                let mut out = Vec::new();
                for a in self.counting(claim_id).filter(|a| a.label == label) {
                    for set in &a.evidence {
                        if seen.insert(set.clone()) {
                            out.push(set.clone());
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    /// Claims whose counting annotations have no strict majority.
    pub fn open_conflicts(&self) -> Vec<(String, Vec<String>)> {
        let mut by_claim: BTreeMap<&str, Vec<&Annotation>> = BTreeMap::new();
        for a in self.annotations.values().filter(|a| a.counts()) {
            by_claim.entry(&a.claim_id).or_default().push(a);
        }
        by_claim
            .into_iter()
            .filter_map(|(c, anns)| match outcome_of(&anns) {
                Some(LabelOutcome::Conflict { annotations }) => Some((c.to_string(), annotations)),
                _ => None,
            })
            .collect()
    }

    fn expire_leases(&mut self, now: Timestamp) {
        self.leases.retain(|_, l| l.expires_at > now);
    }

    fn lease_of(&self, task: TaskKind, annotator: &str) -> Option<&Lease> {
        self.leases.values().find(|l| l.task == task && l.annotator == annotator)
    }

    fn next_rng(&mut self, seed: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(self.counters.draws);
        self.counters.draws += 1;
        rng
    }

    fn next_annotation_id(&mut self) -> String {
        self.counters.annotations += 1;
        format!("a{:07}", self.counters.annotations)
    }

    /// Validates a state change on counting annotations of one claim and returns
    /// the resulting outcome without applying it.
    fn preview(&self, claim_id: &str, retract: &[String], add: Option<Label>) -> Result<Option<LabelOutcome>> {
        for id in retract {
            let a = self.annotations.get(id).ok_or_else(|| Error::not_found(format!("annotation {id}")))?;
            if a.claim_id != claim_id {
                return Err(Error::validation(format!("annotation {id} belongs to claim {}", a.claim_id)));
            }
            if !a.counts() {
                return Err(Error::validation(format!("annotation {id} is already retracted")));
            }
        }
        let mut labels: Vec<(String, Label)> = self
            .counting(claim_id)
            .filter(|a| !retract.contains(&a.id))
            .map(|a| (a.id.clone(), a.label))
            .collect();
        if let Some(l) = add {
            labels.push(("new".into(), l));
        }
        Ok(outcome_from_labels(&labels))
    }

    fn apply_resolution(&mut self, claim_id: &str, resolver: &str, retract: &[String], corrective: Option<(Label, Vec<Vec<String>>)>, now: Timestamp) -> Option<String> {
        for id in retract {
            if let Some(a) = self.annotations.get_mut(id) {
                a.state = AnnotationState::Retracted;
            }
        }
        corrective.map(|(label, evidence)| {
            let id = self.next_annotation_id();
            self.annotations.insert(
                id.clone(),
                Annotation {
                    id: id.clone(),
                    claim_id: claim_id.to_string(),
                    annotator: resolver.to_string(),
                    label,
                    evidence,
                    elapsed_secs: 0.0,
                    created_at: now,
                    state: AnnotationState::Corrective,
                },
            );
            id
        })
    }
}

fn outcome_from_labels(labels: &[(String, Label)]) -> Option<LabelOutcome> {
    if labels.is_empty() {
        return None;
    }
    let mut counts = [0usize; 3];
    labels.iter().for_each(|(_, l)| counts[l.index()] += 1);
    match Label::ALL.into_iter().find(|l| 2 * counts[l.index()] > labels.len()) {
        Some(label) => Some(LabelOutcome::Agreed { label }),
        None => Some(LabelOutcome::Conflict { annotations: labels.iter().map(|(id, _)| id.clone()).collect() }),
    }
}

fn outcome_of(anns: &[&Annotation]) -> Option<LabelOutcome> {
    let labels: Vec<(String, Label)> = anns.iter().map(|a| (a.id.clone(), a.label)).collect();
    outcome_from_labels(&labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: u64,
    pub at: Timestamp,
    pub actor: String,
    pub action: String,
    pub detail: Value,
}

const SNAPSHOT_FILE: &str = "state.json";
const AUDIT_FILE: &str = "audit.jsonl";

struct Store {
    dir: PathBuf,
}

impl Store {
    fn write_snapshot(&self, state: &State) -> Result<()> {
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let mut f = std::fs::File::create(&tmp)?;
        serde_json::to_writer(&mut f, state)?;
        f.sync_all()?;
        std::fs::rename(&tmp, self.dir.join(SNAPSHOT_FILE))?;
        Ok(())
    }

    fn append_audit(&self, entry: &AuditEntry) -> Result<()> {
        let mut f = OpenOptions::new().create(true).append(true).open(self.dir.join(AUDIT_FILE))?;
        let mut line = serde_json::to_vec(entry)?;
        line.push(b'\n');
        f.write_all(&line)?;
        f.sync_data()?;
        Ok(())
    }

    fn load(&self) -> Result<(State, Vec<AuditEntry>)> {
        let snap = self.dir.join(SNAPSHOT_FILE);
        let state: State = if snap.exists() {
            serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(&snap)?))?
        } else {
            State::default()
        };
        let audit_path = self.dir.join(AUDIT_FILE);
        let mut audit: Vec<AuditEntry> = if audit_path.exists() { crate::jsonl::read(&audit_path)? } else { Vec::new() };
        // entries written before a snapshot that never landed are not part of history
        audit.retain(|e| e.seq <= state.counters.audit_seq);
        Ok((state, audit))
    }
}

#[derive(Debug, Clone)]
enum DictKey {
    Paragraph(String),
    Claim(String),
}

#[derive(Debug, Clone)]
struct Job {
    key: DictKey,
    text: String,
    timestamp: Timestamp,
}

pub(crate) struct Ctx<'a> {
    pub now: Timestamp,
    pub corpus: &'a Corpus,
    pub dicts: &'a dyn DictionaryProvider,
    pub config: &'a ServiceConfig,
}

struct Inner {
    corpus: Arc<Corpus>,
    dicts: Arc<dyn DictionaryProvider>,
    clock: Arc<dyn Clock>,
    config: ServiceConfig,
    state: RwLock<State>,
    audit: Mutex<Vec<AuditEntry>>,
    store: Option<Store>,
    jobs: Mutex<Option<mpsc::Sender<Job>>>,
    pending: Mutex<usize>,
    idle: Condvar,
}

/// Cheap to clone; clones share state.
#[derive(Clone)]
pub struct AnnotationService {
    inner: Arc<Inner>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionTask {
    pub paragraph: Paragraph,
    pub scope: KnowledgeScope,
    pub lease_expires_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingTask {
    pub claim: Claim,
    pub source: Paragraph,
    pub scope: KnowledgeScope,
    /// The claim's own dictionary was not ready; the scope holds only the source's.
    pub dictionary_pending: bool,
    pub lease_expires_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationOutcome {
    pub claims: Vec<Claim>,
    pub warnings: Vec<String>,
}

/// Retractions and an optional corrective annotation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    #[serde(default)]
    pub retract: Vec<String>,
    #[serde(default)]
    pub corrective: Option<CorrectiveAnnotation>,
    #[serde(default)]
    pub error_tags: Vec<ErrorTag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectiveAnnotation {
    pub label: Label,
    #[serde(default)]
    pub evidence: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimView {
    pub claim: Claim,
    pub mutations: Vec<String>,
    pub annotations: Vec<Annotation>,
    pub outcome: Option<LabelOutcome>,
    pub merged_evidence: Option<Vec<Vec<String>>>,
    pub dictionary: Option<DictionaryStatus>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreselectState {
    pub paragraph_id: String,
    pub accepted: bool,
    /// Accepted paragraphs still waiting for extraction.
    pub pool: usize,
}

pub(crate) use CorrectiveAnnotation as Corrective;

impl AnnotationService {
    /// In-memory service; nothing is written to disk.
    pub fn new(corpus: Arc<Corpus>, dicts: Arc<dyn DictionaryProvider>, clock: Arc<dyn Clock>, config: ServiceConfig) -> Result<Self> {
        Self::build(corpus, dicts, clock, config, None, State::default(), Vec::new())
    }

    /// Loads or creates a persistent service in `dir`.
    pub fn open(
        dir: &Path,
        corpus: Arc<Corpus>,
        dicts: Arc<dyn DictionaryProvider>,
        clock: Arc<dyn Clock>,
        config: ServiceConfig,
    ) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let store = Store { dir: dir.to_path_buf() };
        let (state, audit) = store.load()?;
        Self::build(corpus, dicts, clock, config, Some(store), state, audit)
    }

    fn build(
        corpus: Arc<Corpus>,
        dicts: Arc<dyn DictionaryProvider>,
        clock: Arc<dyn Clock>,
        config: ServiceConfig,
        store: Option<Store>,
        state: State,
        audit: Vec<AuditEntry>,
    ) -> Result<Self> {
        config.validate()?;
        let background = config.background_precompute;
        let resume: Vec<Job> = state
            .dict_status
            .iter()
            .filter(|(_, s)| **s == DictionaryStatus::Pending)
            .filter_map(|(id, _)| state.claims.get(id))
            .map(|c| Job { key: DictKey::Claim(c.id.clone()), text: c.text.clone(), timestamp: c.timestamp })
            .collect();
        let inner = Arc::new(Inner {
            corpus,
            dicts,
            clock,
            config,
            state: RwLock::new(state),
            audit: Mutex::new(audit),
            store,
            jobs: Mutex::new(None),
            pending: Mutex::new(0),
            idle: Condvar::new(),
        });
        if background {
            let (tx, rx) = mpsc::channel::<Job>();
            let weak: Weak<Inner> = Arc::downgrade(&inner);
            std::thread::Builder::new()
                .name("dictionary-precompute".into())
                .spawn(move || {
                    for job in rx {
                        let Some(inner) = weak.upgrade() else { break };
                        let svc = AnnotationService { inner };
                        svc.run_job(job);
                    }
                })?;
            *inner.jobs.lock().unwrap() = Some(tx);
        }
        let svc = AnnotationService { inner };
        svc.schedule(resume);
        Ok(svc)
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    pub fn corpus(&self) -> &Arc<Corpus> {
        &self.inner.corpus
    }

    pub fn now(&self) -> Timestamp {
        self.inner.clock.now()
    }

    pub(crate) fn read<R>(&self, f: impl FnOnce(&State) -> R) -> R {
        f(&self.inner.state.read().unwrap())
    }

    /// Runs `f` as one transaction. `f` must fail before mutating when the
    /// service is in-memory; with a store it works on a draft that is only
    /// swapped in after the audit entry and snapshot are written.
    pub(crate) fn transact<R>(
        &self,
        actor: &str,
        action: Option<&str>,
        f: impl FnOnce(&mut State, &Ctx<'_>) -> Result<(R, Value)>,
    ) -> Result<R> {
        let inner = &self.inner;
        let mut guard = inner.state.write().unwrap();
        let ctx = Ctx { now: inner.clock.now(), corpus: &inner.corpus, dicts: inner.dicts.as_ref(), config: &inner.config };
        let make_entry = |state: &mut State, detail: Value| {
            action.map(|a| {
                state.counters.audit_seq += 1;
                AuditEntry { seq: state.counters.audit_seq, at: ctx.now, actor: actor.to_string(), action: a.to_string(), detail }
            })
        };
        let (result, entry) = match &inner.store {
            Some(store) => {
                let mut draft = guard.clone();
                let (r, detail) = f(&mut draft, &ctx)?;
                let entry = make_entry(&mut draft, detail);
                if let Some(e) = &entry {
                    store.append_audit(e)?;
                }
                store.write_snapshot(&draft)?;
                *guard = draft;
                (r, entry)
            }
            None => {
                let (r, detail) = f(&mut guard, &ctx)?;
                (r, make_entry(&mut guard, detail))
            }
        };
        drop(guard);
        if let Some(e) = entry {
            inner.audit.lock().unwrap().push(e);
        }
        Ok(result)
    }

    pub fn audit_log(&self) -> Vec<AuditEntry> {
        self.inner.audit.lock().unwrap().clone()
    }

    fn schedule(&self, jobs: Vec<Job>) {
        if jobs.is_empty() {
            return;
        }
        let sender = self.inner.jobs.lock().unwrap().clone();
        match sender {
            Some(tx) => {
                *self.inner.pending.lock().unwrap() += jobs.len();
                for job in jobs {
                    if tx.send(job).is_err() {
                        self.finish_pending();
                    }
                }
            }
            None => {
                for job in jobs {
                    *self.inner.pending.lock().unwrap() += 1;
                    self.run_job(job);
                }
            }
        }
    }

    fn finish_pending(&self) {
        let mut p = self.inner.pending.lock().unwrap();
        *p = p.saturating_sub(1);
        if *p == 0 {
            self.inner.idle.notify_all();
        }
    }

    fn run_job(&self, job: Job) {
        let result = self.inner.dicts.dictionary(&job.text, job.timestamp);
        let stored = self.transact("system", None, |st, _| {
            match (&job.key, result) {
                (DictKey::Claim(id), Ok(d)) => {
                    st.claim_dicts.insert(id.clone(), d);
                    st.dict_status.insert(id.clone(), DictionaryStatus::Ready);
                }
                (DictKey::Claim(id), Err(e)) => {
                    st.dict_status.insert(id.clone(), DictionaryStatus::Failed { message: e.to_string() });
                }
                (DictKey::Paragraph(id), Ok(d)) => {
                    st.paragraph_dicts.entry(id.clone()).or_insert(d);
                }
                (DictKey::Paragraph(id), Err(e)) => {
                    tracing::warn!(paragraph = %id, error = %e, "paragraph dictionary failed");
                }
            }
            Ok(((), Value::Null))
        });
        if let Err(e) = stored {
            tracing::error!(error = %e, "could not store precomputed dictionary");
        }
        self.finish_pending();
    }

    /// Blocks until every queued dictionary has been computed.
    pub fn wait_idle(&self) {
        let mut p = self.inner.pending.lock().unwrap();
        while *p > 0 {
            p = self.inner.idle.wait(p).unwrap();
        }
    }

    pub fn dictionary_status(&self, claim_id: &str) -> Option<DictionaryStatus> {
        self.read(|st| st.dict_status.get(claim_id).cloned())
    }

    // ---- T0 ----

    pub fn preselect(&self, curator: &str, paragraph_id: &str, accept: bool) -> Result<PreselectState> {
        let p = self.inner.corpus.get_paragraph(paragraph_id)?.clone();
        let (state, needs_dict) = self.transact(curator, Some("t0_decision"), |st, ctx| {
            let previous = st.decisions.insert(
                paragraph_id.to_string(),
                Decision { accepted: accept, curator: curator.to_string(), at: ctx.now },
            );
            let pool = extraction_pool(st).len();
            let needs = accept && !st.paragraph_dicts.contains_key(paragraph_id);
            let detail = json!({"paragraph": paragraph_id, "accept": accept, "previous": previous.map(|d| d.accepted)});
            Ok(((PreselectState { paragraph_id: paragraph_id.to_string(), accepted: accept, pool }, needs), detail))
        })?;
        if needs_dict && self.inner.config.background_precompute {
            self.schedule(vec![Job { key: DictKey::Paragraph(p.paragraph_id.clone()), text: p.text.clone(), timestamp: p.published_at }]);
        }
        Ok(state)
    }

    /// Accepted paragraphs that have not produced a claim yet.
    pub fn extraction_pool(&self) -> Vec<String> {
        self.read(|st| extraction_pool(st).into_iter().map(str::to_string).collect())
    }

    // ---- T1a ----

    pub fn next_extraction_task(&self, annotator: &str) -> Result<ExtractionTask> {
        self.transact(annotator, Some("t1a_task"), |st, ctx| {
            st.expire_leases(ctx.now);
            if let Some(l) = st.lease_of(TaskKind::Extraction, annotator) {
                let task = ExtractionTask {
                    paragraph: ctx.corpus.get_paragraph(&l.item)?.clone(),
                    scope: l.scope.clone(),
                    lease_expires_at: l.expires_at,
                };
                return Ok((task, json!({"paragraph": l.item, "resumed": true})));
            }
            let skipped = st.skips.get(annotator);
            let candidates: Vec<String> = extraction_pool(st)
                .into_iter()
                .filter(|p| !st.leases.contains_key(&lease_key(TaskKind::Extraction, p)))
                .filter(|p| !skipped.is_some_and(|s| s.contains(*p)))
                .map(str::to_string)
                .collect();
            if candidates.is_empty() {
                return Err(Error::NoTask);
            }
            let mut rng = st.next_rng(ctx.config.seed);
            let pid = candidates[rng.gen_range(0..candidates.len())].clone();
            let paragraph = ctx.corpus.get_paragraph(&pid)?.clone();
            let dp = paragraph_dictionary(st, ctx, &paragraph)?;
            let scope = assemble_scope(ctx.corpus, &pid, &[&dp], rng.gen())?;
            let expires = ctx.now + ctx.config.lease_secs;
            st.leases.insert(
                lease_key(TaskKind::Extraction, &pid),
                Lease {
                    task: TaskKind::Extraction,
                    item: pid.clone(),
                    annotator: annotator.to_string(),
                    expires_at: expires,
                    scope: scope.clone(),
                    dictionary_pending: false,
                },
            );
            Ok((ExtractionTask { paragraph, scope, lease_expires_at: expires }, json!({"paragraph": pid})))
        })
    }

    pub fn skip_extraction(&self, annotator: &str, paragraph_id: &str) -> Result<()> {
        self.transact(annotator, Some("t1a_skip"), |st, ctx| {
            take_lease(st, TaskKind::Extraction, paragraph_id, annotator, ctx.now)?;
            st.skips.entry(annotator.to_string()).or_default().insert(paragraph_id.to_string());
            Ok(((), json!({"paragraph": paragraph_id})))
        })
    }

    pub fn submit_claim(&self, annotator: &str, paragraph_id: &str, text: &str) -> Result<Claim> {
        let text = normalize_whitespace(text);
        self.transact(annotator, Some("t1a_claim"), |st, ctx| {
            if text.is_empty() {
                return Err(Error::validation("claim text is empty"));
            }
            check_lease(st, TaskKind::Extraction, paragraph_id, annotator, ctx.now)?;
            let p = ctx.corpus.get_paragraph(paragraph_id)?;
            st.leases.remove(&lease_key(TaskKind::Extraction, paragraph_id));
            st.counters.claims += 1;
            let claim = Claim {
                id: format!("c{:07}", st.counters.claims),
                text: text.clone(),
                source_paragraph: paragraph_id.to_string(),
                timestamp: p.published_at,
                parent: None,
                mutation: MutationType::Initial,
                author: annotator.to_string(),
                created_at: ctx.now,
            };
            st.claims.insert(claim.id.clone(), claim.clone());
            let detail = json!({"claim": claim.id, "paragraph": paragraph_id});
            Ok((claim, detail))
        })
    }

    // ---- T1b ----

    pub fn submit_mutations(&self, annotator: &str, claim_id: &str, mutations: &[(String, MutationType)]) -> Result<MutationOutcome> {
        let outcome = self.transact(annotator, Some("t1b_mutations"), |st, ctx| {
            let parent = st.claim(claim_id)?.clone();
            if !parent.is_initial() {
                return Err(Error::validation(format!("claim {claim_id} is a mutation; mutate its initial claim")));
            }
            let mut texts = Vec::with_capacity(mutations.len());
            for (text, kind) in mutations {
                if *kind == MutationType::Initial {
                    return Err(Error::validation("mutation type cannot be initial"));
                }
                let t = normalize_whitespace(text);
                if t.is_empty() {
                    return Err(Error::validation("mutation text is empty"));
                }
                texts.push((t, *kind));
            }
            let mut known: BTreeSet<String> = st
                .claims
                .values()
                .filter(|c| c.id == parent.id || c.parent.as_deref() == Some(claim_id))
                .map(|c| c.text.to_lowercase())
                .collect();
            let mut warnings = Vec::new();
            let mut created = Vec::new();
            for (t, kind) in texts {
                if !known.insert(t.to_lowercase()) {
                    warnings.push(format!("duplicate text: {t:?}"));
                }
                st.counters.claims += 1;
                let c = Claim {
                    id: format!("c{:07}", st.counters.claims),
                    text: t,
                    source_paragraph: parent.source_paragraph.clone(),
                    timestamp: parent.timestamp,
                    parent: Some(parent.id.clone()),
                    mutation: kind,
                    author: annotator.to_string(),
                    created_at: ctx.now,
                };
                st.dict_status.insert(c.id.clone(), DictionaryStatus::Pending);
                st.claims.insert(c.id.clone(), c.clone());
                created.push(c);
            }
            let detail = json!({"parent": claim_id, "created": created.iter().map(|c| &c.id).collect::<Vec<_>>(), "warnings": warnings});
            Ok((MutationOutcome { claims: created, warnings }, detail))
        })?;
        self.schedule(
            outcome
                .claims
                .iter()
                .map(|c| Job { key: DictKey::Claim(c.id.clone()), text: c.text.clone(), timestamp: c.timestamp })
                .collect(),
        );
        Ok(outcome)
    }

    // ---- T2 ----

    pub fn next_labeling_task(&self, annotator: &str) -> Result<LabelingTask> {
        self.transact(annotator, Some("t2_task"), |st, ctx| {
            st.expire_leases(ctx.now);
            if let Some(l) = st.lease_of(TaskKind::Labeling, annotator) {
                let claim = st.claim(&l.item)?.clone();
                let task = LabelingTask {
                    source: ctx.corpus.get_paragraph(&claim.source_paragraph)?.clone(),
                    claim,
                    scope: l.scope.clone(),
                    dictionary_pending: l.dictionary_pending,
                    lease_expires_at: l.expires_at,
                };
                return Ok((task, json!({"claim": l.item, "resumed": true})));
            }
            let mut labeled: BTreeMap<&str, usize> = BTreeMap::new();
            let mut mine: BTreeSet<&str> = BTreeSet::new();
            for a in st.annotations.values() {
                if a.counts() {
                    *labeled.entry(&a.claim_id).or_default() += 1;
                }
                if a.annotator == annotator {
                    mine.insert(&a.claim_id);
                }
            }
            let candidates: Vec<(String, f64)> = st
                .claims
                .values()
                .filter(|c| !c.is_initial() && c.author != annotator && !mine.contains(c.id.as_str()))
                .filter(|c| !st.leases.contains_key(&lease_key(TaskKind::Labeling, &c.id)))
                .map(|c| {
                    let n = labeled.get(c.id.as_str()).copied().unwrap_or(0) as f64;
                    (c.id.clone(), (ctx.config.target_labels - n).max(0.0) + ctx.config.epsilon)
                })
                .collect();
            if candidates.is_empty() {
                return Err(Error::NoTask);
            }
            let weights = WeightedIndex::new(candidates.iter().map(|c| c.1)).map_err(|e| Error::invalid(e.to_string()))?;
            let mut rng = st.next_rng(ctx.config.seed);
            let claim = st.claim(&candidates[weights.sample(&mut rng)].0)?.clone();
            let source = ctx.corpus.get_paragraph(&claim.source_paragraph)?.clone();
            let dp = paragraph_dictionary(st, ctx, &source)?;
            let dm = st.claim_dicts.get(&claim.id).cloned();
            let pending = dm.is_none();
            let mut dicts = vec![&dp];
            if let Some(d) = &dm {
                dicts.push(d);
            }
            let scope = assemble_scope(ctx.corpus, &source.paragraph_id, &dicts, rng.gen())?;
            let expires = ctx.now + ctx.config.lease_secs;
            st.leases.insert(
                lease_key(TaskKind::Labeling, &claim.id),
                Lease {
                    task: TaskKind::Labeling,
                    item: claim.id.clone(),
                    annotator: annotator.to_string(),
                    expires_at: expires,
                    scope: scope.clone(),
                    dictionary_pending: pending,
                },
            );
            let detail = json!({"claim": claim.id, "dictionary_pending": pending});
            Ok((LabelingTask { claim, source, scope, dictionary_pending: pending, lease_expires_at: expires }, detail))
        })
    }

    pub fn submit_label(&self, annotator: &str, claim_id: &str, label: Label, evidence: &[Vec<String>], elapsed_secs: f64) -> Result<Annotation> {
        self.transact(annotator, Some("t2_label"), |st, ctx| {
            let lease = check_lease(st, TaskKind::Labeling, claim_id, annotator, ctx.now)?;
            let evidence = normalize_evidence(label, evidence)?;
            if !(elapsed_secs.is_finite() && elapsed_secs >= 0.0) {
                return Err(Error::validation("elapsed time must be finite and >= 0"));
            }
            let allowed = lease.scope.allowed_evidence(ctx.corpus);
            let outside: Vec<&String> = evidence.iter().flatten().filter(|p| !allowed.contains(*p)).collect();
            if !outside.is_empty() {
                return Err(Error::validation(format!("evidence outside the knowledge scope: {outside:?}")));
            }
            st.leases.remove(&lease_key(TaskKind::Labeling, claim_id));
            let id = st.next_annotation_id();
            let ann = Annotation {
                id: id.clone(),
                claim_id: claim_id.to_string(),
                annotator: annotator.to_string(),
                label,
                evidence,
                elapsed_secs,
                created_at: ctx.now,
                state: AnnotationState::Active,
            };
            st.annotations.insert(id.clone(), ann.clone());
            let detail = json!({"annotation": id, "claim": claim_id, "label": label, "sets": ann.evidence.len(), "elapsed": elapsed_secs});
            Ok((ann, detail))
        })
    }

    // ---- aggregation and cleaning ----

    pub fn aggregate_label(&self, claim_id: &str) -> Result<LabelOutcome> {
        self.read(|st| {
            st.claim(claim_id)?;
            st.outcome(claim_id).ok_or_else(|| Error::validation(format!("claim {claim_id} has no active annotations")))
        })
    }

    pub fn merge_evidence(&self, claim_id: &str) -> Result<Vec<Vec<String>>> {
        self.read(|st| {
            st.claim(claim_id)?;
            st.merged_evidence(claim_id)
        })
    }

    pub fn conflicts(&self) -> Vec<(String, Vec<String>)> {
        self.read(State::open_conflicts)
    }

    pub fn conflict_records(&self) -> Vec<ConflictRecord> {
        self.read(|st| st.conflicts.clone())
    }

    pub fn resolve_conflict(&self, resolver: &str, claim_id: &str, resolution: &Resolution) -> Result<ConflictRecord> {
        self.transact(resolver, Some("conflict_resolve"), |st, ctx| {
            st.claim(claim_id)?;
            let conflicting = match st.outcome(claim_id) {
                Some(LabelOutcome::Conflict { annotations }) => annotations,
                _ => return Err(Error::validation(format!("claim {claim_id} has no open conflict"))),
            };
            let corrective = validate_corrective(ctx.corpus, resolution.corrective.as_ref())?;
            let verdict = match st.preview(claim_id, &resolution.retract, corrective.as_ref().map(|c| c.0))? {
                Some(LabelOutcome::Agreed { label }) => label,
                _ => return Err(Error::validation("resolution leaves the claim without a majority label")),
            };
            let corrective_id = st.apply_resolution(claim_id, resolver, &resolution.retract, corrective, ctx.now);
            st.counters.conflicts += 1;
            let record = ConflictRecord {
                id: format!("x{:06}", st.counters.conflicts),
                claim_id: claim_id.to_string(),
                conflicting,
                retracted: resolution.retract.clone(),
                corrective: corrective_id,
                verdict,
                error_tags: if resolution.error_tags.is_empty() { vec![ErrorTag::None] } else { resolution.error_tags.clone() },
                resolver: resolver.to_string(),
                resolved_at: ctx.now,
            };
            st.conflicts.push(record.clone());
            let detail = serde_json::to_value(&record)?;
            Ok((record, detail))
        })
    }

    /// Applies retractions and a corrective annotation outside conflict resolution.
    pub(crate) fn amend(&self, st: &mut State, ctx_now: Timestamp, actor: &str, claim_id: &str, resolution: &Resolution) -> Result<Option<String>> {
        let corrective = validate_corrective(&self.inner.corpus, resolution.corrective.as_ref())?;
        st.preview(claim_id, &resolution.retract, corrective.as_ref().map(|c| c.0))?;
        Ok(st.apply_resolution(claim_id, actor, &resolution.retract, corrective, ctx_now))
    }

    pub fn claim_view(&self, claim_id: &str) -> Result<ClaimView> {
        self.read(|st| {
            let claim = st.claim(claim_id)?.clone();
            let outcome = st.outcome(claim_id);
            let merged = match &outcome {
                Some(LabelOutcome::Agreed { .. }) => st.merged_evidence(claim_id).ok(),
                _ => None,
            };
            Ok(ClaimView {
                mutations: st.claims.values().filter(|c| c.parent.as_deref() == Some(claim_id)).map(|c| c.id.clone()).collect(),
                annotations: st.annotations.values().filter(|a| a.claim_id == claim_id).cloned().collect(),
                outcome,
                merged_evidence: merged,
                dictionary: st.dict_status.get(claim_id).cloned(),
                claim,
            })
        })
    }

    pub fn claims(&self) -> Vec<Claim> {
        self.read(|st| st.claims.values().cloned().collect())
    }

    pub fn annotations(&self) -> Vec<Annotation> {
        self.read(|st| st.annotations.values().cloned().collect())
    }

    /// Paragraphs of the same article, for scope augmentation.
    pub fn same_article(&self, paragraph_id: &str) -> Result<Vec<Paragraph>> {
        Ok(self.inner.corpus.same_article_paragraphs(paragraph_id)?.into_iter().cloned().collect())
    }
}

fn extraction_pool(st: &State) -> Vec<&str> {
    let extracted: BTreeSet<&str> = st.claims.values().filter(|c| c.is_initial()).map(|c| c.source_paragraph.as_str()).collect();
    st.decisions
        .iter()
        .filter(|(p, d)| d.accepted && !extracted.contains(p.as_str()))
        .map(|(p, _)| p.as_str())
        .collect()
}

fn check_lease<'s>(st: &'s State, task: TaskKind, item: &str, annotator: &str, now: Timestamp) -> Result<&'s Lease> {
    match st.leases.get(&lease_key(task, item)) {
        Some(l) if l.annotator == annotator && l.expires_at > now => Ok(l),
        Some(l) if l.expires_at > now => Err(Error::Forbidden(format!("{item} is leased to another annotator"))),
        _ => Err(Error::Forbidden(format!("no active lease on {item}"))),
    }
}

fn take_lease(st: &mut State, task: TaskKind, item: &str, annotator: &str, now: Timestamp) -> Result<Lease> {
    check_lease(st, task, item, annotator, now)?;
    Ok(st.leases.remove(&lease_key(task, item)).expect("checked"))
}

fn paragraph_dictionary(st: &mut State, ctx: &Ctx<'_>, p: &Paragraph) -> Result<Dictionary> {
    if let Some(d) = st.paragraph_dicts.get(&p.paragraph_id) {
        return Ok(d.clone());
    }
    let d = ctx.dicts.dictionary(&p.text, p.published_at)?;
    st.paragraph_dicts.insert(p.paragraph_id.clone(), d.clone());
    Ok(d)
}

fn validate_corrective(corpus: &Corpus, c: Option<&Corrective>) -> Result<Option<(Label, Vec<Vec<String>>)>> {
    let Some(c) = c else { return Ok(None) };
    let evidence = normalize_evidence(c.label, &c.evidence)?;
    if let Some(missing) = evidence.iter().flatten().find(|p| !corpus.contains(p)) {
        return Err(Error::validation(format!("unknown evidence paragraph {missing}")));
    }
    Ok(Some((c.label, evidence)))
}
