//! Transfers a FEVER-style dataset onto a target-language corpus.
//!
//! Evidence pages are mapped through an interlanguage alignment; evidence sets
//! with any page that is unmapped or missing from the target are pruned, and
//! verifiable claims left without a set are dropped. Sentence indexes do not
//! survive the mapping, so evidence becomes whole target documents.

mod mt;
mod nli;
mod split;
mod validity;

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use mt::{translate_claims, HttpMt, IdentityMt, MtClient, MtRequest, MtResponse, TranslateConfig, TranslateOutcome, TranslationCache};
pub use nli::{build_nli_pairs, NliPair, NliProvenance, NliReport, NEI_SENTENCES};
pub use split::{resplit, ResplitReport};
pub use validity::{ingest_validity, validity_sample, ValidityItem, ValidityOutcome, ValidityReport};

use crate::error::{Error, Result};
use crate::types::{Label, Split};

/// A claim in the source dataset. Evidence sets hold `(page title, sentence index)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceClaim {
    pub id: String,
    pub claim: String,
    pub label: Label,
    pub evidence: Vec<Vec<(String, Option<i64>)>>,
}

#[derive(Deserialize)]
struct RawClaim {
    id: Value,
    claim: String,
    label: Label,
    #[serde(default)]
    evidence: Vec<Vec<Vec<Value>>>,
}

fn id_string(v: &Value) -> Result<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        other => Err(Error::Format(format!("claim id must be a string or number, got {other}"))),
    }
}

impl SourceClaim {
    /// Parses one FEVER line. Evidence entries are `[annotation, evidence, page, sentence]`
    /// or `[page, sentence]`; entries with a null page are ignored.
    pub fn from_json_line(line: &str) -> Result<SourceClaim> {
        let raw: RawClaim = serde_json::from_str(line)?;
        let mut evidence = Vec::new();
        for set in &raw.evidence {
            let mut pages = Vec::new();
            for entry in set {
                let (page, sent) = match entry.len() {
                    4 => (&entry[2], &entry[3]),
                    2 => (&entry[0], &entry[1]),
                    n => return Err(Error::Format(format!("evidence entry with {n} fields"))),
                };
                if let Value::String(p) = page {
                    pages.push((p.clone(), sent.as_i64()));
                }
            }
            if !pages.is_empty() {
                evidence.push(pages);
            }
        }
        Ok(SourceClaim { id: id_string(&raw.id)?, claim: raw.claim, label: raw.label, evidence })
    }

    pub fn read_jsonl(path: &Path) -> Result<Vec<SourceClaim>> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut out = Vec::new();
        for (n, line) in file.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(
                SourceClaim::from_json_line(&line)
                    .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), n + 1)))?,
            );
        }
        Ok(out)
    }
}

/// Source page title to target page title. A missing key means "no counterpart".
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentTable {
    pub map: BTreeMap<String, String>,
}

impl AlignmentTable {
    /// Two tab-separated columns; an empty second column or `#` line is skipped.
    pub fn parse_tsv(text: &str) -> Result<AlignmentTable> {
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.splitn(2, '\t');
            let src = cols.next().unwrap_or("").trim();
            let dst = cols.next().map(str::trim).unwrap_or("");
            if src.is_empty() {
                return Err(Error::Format(format!("alignment line {}: empty source title", n + 1)));
            }
            if !dst.is_empty() {
                map.insert(src.to_string(), dst.to_string());
            }
        }
        Ok(AlignmentTable { map })
    }

    pub fn get(&self, source: &str) -> Option<&str> {
        self.map.get(source).map(String::as_str)
    }

    pub fn remove(&mut self, source: &str) -> Option<String> {
        self.map.remove(source)
    }
}

/// Read access to target-language documents.
pub trait DocumentLookup: Sync {
    /// Document id for a target page title, if the page exists.
    fn resolve(&self, title: &str) -> Option<String>;
    fn text(&self, doc_id: &str) -> Option<&str>;
}

/// Whole target documents keyed by title.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TargetCorpus {
    pub docs: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct DocRecord {
    id: String,
    text: String,
}

impl TargetCorpus {
    pub fn from_pairs<I, S, T>(docs: I) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: Into<String>,
    {
        TargetCorpus { docs: docs.into_iter().map(|(k, v)| (k.into(), v.into())).collect() }
    }

    /// Newline-delimited `{"id": ..., "text": ...}` records.
    pub fn read_jsonl(path: &Path) -> Result<TargetCorpus> {
        let recs: Vec<DocRecord> = crate::jsonl::read(path)?;
        Ok(TargetCorpus::from_pairs(recs.into_iter().map(|r| (r.id, r.text))))
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// `(id, 0, text)` triples for index construction.
    pub fn documents(&self) -> impl Iterator<Item = (String, crate::types::Timestamp, &str)> {
        self.docs.iter().map(|(k, v)| (k.clone(), 0, v.as_str()))
    }
}

impl DocumentLookup for TargetCorpus {
    fn resolve(&self, title: &str) -> Option<String> {
        self.docs.contains_key(title).then(|| title.to_string())
    }

    fn text(&self, doc_id: &str) -> Option<&str> {
        self.docs.get(doc_id).map(String::as_str)
    }
}

impl DocumentLookup for crate::corpus::Corpus {
    fn resolve(&self, title: &str) -> Option<String> {
        self.contains(title).then(|| title.to_string())
    }

    fn text(&self, doc_id: &str) -> Option<&str> {
        self.get_paragraph(doc_id).ok().map(|p| p.text.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizedClaim {
    pub id: String,
    pub claim: String,
    /// Text before translation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_claim: Option<String>,
    pub label: Label,
    /// Target document ids; each inner list is one evidence set.
    pub evidence: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneReason {
    /// A page has no aligned target title.
    Unmapped,
    /// The aligned title is absent from the target corpus.
    MissingInTarget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// Verifiable claim that arrived without any evidence set.
    NoSourceEvidence,
    /// Every evidence set was pruned.
    AllSetsPruned,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LocalizeReport {
    pub input: usize,
    pub kept: BTreeMap<Label, usize>,
    pub dropped: BTreeMap<DropReason, usize>,
    /// Pruned evidence sets by the first failing page's reason.
    pub pruned_sets: BTreeMap<PruneReason, usize>,
    pub dropped_ids: Vec<String>,
}

impl LocalizeReport {
    pub fn kept_total(&self) -> usize {
        self.kept.values().sum()
    }

    pub fn dropped_total(&self) -> usize {
        self.dropped.values().sum()
    }
}

fn map_set(set: &[(String, Option<i64>)], alignment: &AlignmentTable, target: &dyn DocumentLookup) -> std::result::Result<Vec<String>, PruneReason> {
    let mut out: Vec<String> = Vec::new();
    for (page, _) in set {
        let title = alignment.get(page).ok_or(PruneReason::Unmapped)?;
        let doc = target.resolve(title).ok_or(PruneReason::MissingInTarget)?;
        if !out.contains(&doc) {
            out.push(doc);
        }
    }
    Ok(out)
}

/// Maps evidence to target documents, pruning sets and dropping unsupported
/// verifiable claims. NEI claims are always kept with empty evidence.
pub fn localize(
    claims: &[SourceClaim],
    alignment: &AlignmentTable,
    target: &dyn DocumentLookup,
) -> (Vec<LocalizedClaim>, LocalizeReport) {
    let mut report = LocalizeReport { input: claims.len(), ..Default::default() };
    let mut kept = Vec::new();
    for c in claims {
        let mut sets: Vec<Vec<String>> = Vec::new();
        let mut seen: BTreeSet<BTreeSet<String>> = BTreeSet::new();
        if c.label.is_verifiable() {
            for set in &c.evidence {
                match map_set(set, alignment, target) {
                    Ok(docs) => {
                        if seen.insert(docs.iter().cloned().collect()) {
                            sets.push(docs);
                        }
                    }
                    Err(reason) => *report.pruned_sets.entry(reason).or_default() += 1,
                }
            }
            if sets.is_empty() {
                let reason = if c.evidence.is_empty() { DropReason::NoSourceEvidence } else { DropReason::AllSetsPruned };
                *report.dropped.entry(reason).or_default() += 1;
                report.dropped_ids.push(c.id.clone());
                continue;
            }
        }
        *report.kept.entry(c.label).or_default() += 1;
        kept.push(LocalizedClaim {
            id: c.id.clone(),
            claim: c.claim.clone(),
            source_claim: None,
            label: c.label,
            evidence: sets,
            split: None,
        });
    }
    (kept, report)
}
