//! Annotation service: preselection, claim extraction, mutation, labeling with
//! cross-annotation scheduling, conflict resolution, model-in-the-loop cleaning
//! and dataset export.
//!
//! State lives in memory behind a lock. With a state directory configured,
//! every transaction appends to `audit.jsonl` and atomically replaces
//! `state.json`; a failed write leaves the in-memory state untouched.

mod export;
mod folds;
mod http;
mod service;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use export::{group_stratified_split, DrRecord, NliExportRecord, SPLIT_RATIOS};
pub use folds::{fold_sizes, FoldPrediction, ReviewItem, ReviewStatus};
pub use http::{router, ApiError};
pub use service::{
    AnnotationService, AuditEntry, Clock, ClaimView, CorrectiveAnnotation, DictionaryStatus, ExtractionTask, LabelOutcome, LabelingTask, ManualClock,
    MutationOutcome, PreselectState, Resolution, ServiceConfig, SystemClock,
};

use crate::error::{Error, Result};
use crate::types::{Label, Split, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutationType {
    Initial,
    Rephrase,
    Negate,
    SubstituteSimilar,
    SubstituteDissimilar,
    Generalize,
    Specify,
}

impl MutationType {
    pub const MUTATIONS: [MutationType; 6] = [
        MutationType::Rephrase,
        MutationType::Negate,
        MutationType::SubstituteSimilar,
        MutationType::SubstituteDissimilar,
        MutationType::Generalize,
        MutationType::Specify,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MutationType::Initial => "initial",
            MutationType::Rephrase => "rephrase",
            MutationType::Negate => "negate",
            MutationType::SubstituteSimilar => "substitute-similar",
            MutationType::SubstituteDissimilar => "substitute-dissimilar",
            MutationType::Generalize => "generalize",
            MutationType::Specify => "specify",
        }
    }
}

impl fmt::Display for MutationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MutationType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['_', ' '], "-");
        std::iter::once(MutationType::Initial)
            .chain(MutationType::MUTATIONS)
            .find(|m| m.as_str() == norm)
            .ok_or_else(|| Error::validation(format!("unknown mutation type {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub id: String,
    pub text: String,
    pub source_paragraph: String,
    /// Publication time of the source paragraph.
    pub timestamp: Timestamp,
    pub parent: Option<String>,
    pub mutation: MutationType,
    pub author: String,
    pub created_at: Timestamp,
}

impl Claim {
    pub fn is_initial(&self) -> bool {
        self.parent.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationState {
    Active,
    Retracted,
    /// Added during conflict resolution or review; counts like an active one.
    Corrective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: String,
    pub claim_id: String,
    pub annotator: String,
    pub label: Label,
    pub evidence: Vec<Vec<String>>,
    pub elapsed_secs: f64,
    pub created_at: Timestamp,
    pub state: AnnotationState,
}

impl Annotation {
    pub fn counts(&self) -> bool {
        self.state != AnnotationState::Retracted
    }
}

/// Checks the NEI/evidence biconditional and returns sets with members sorted
/// and duplicate sets removed.
pub fn normalize_evidence(label: Label, evidence: &[Vec<String>]) -> Result<Vec<Vec<String>>> {
    match (label, evidence.is_empty()) {
        (Label::Nei, false) => return Err(Error::validation("NEI annotations carry no evidence")),
        (Label::Supports | Label::Refutes, true) => {
            return Err(Error::validation(format!("{label} needs at least one evidence set")))
        }
        _ => {}
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for set in evidence {
        let members: BTreeSet<String> = set.iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        if members.is_empty() {
            return Err(Error::validation("evidence sets must be non-empty"));
        }
        let v: Vec<String> = members.into_iter().collect();
        if seen.insert(v.clone()) {
            out.push(v);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorTag {
    ExclusionMisassumption,
    General,
    Reasoning,
    ExtendedEvidence,
    InsufficientEvidence,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictRecord {
    pub id: String,
    pub claim_id: String,
    pub conflicting: Vec<String>,
    pub retracted: Vec<String>,
    pub corrective: Option<String>,
    pub verdict: Label,
    pub error_tags: Vec<ErrorTag>,
    pub resolver: String,
    pub resolved_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub id: u32,
    pub seed: u64,
    pub assignment: std::collections::BTreeMap<String, Split>,
    /// Test claims of this fold; traversed from the moment the fold exists.
    pub traversed: BTreeSet<String>,
    pub created_at: Timestamp,
}

impl Fold {
    pub fn split_of(&self, claim_id: &str) -> Option<Split> {
        self.assignment.get(claim_id).copied()
    }

    pub fn members(&self, split: Split) -> impl Iterator<Item = &str> {
        self.assignment.iter().filter(move |(_, s)| **s == split).map(|(c, _)| c.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mutation_types_round_trip() {
        for m in MutationType::MUTATIONS {
            assert_eq!(m.as_str().parse::<MutationType>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.as_str()));
        }
        assert_eq!("substitute_similar".parse::<MutationType>().unwrap(), MutationType::SubstituteSimilar);
        assert!("paraphrase".parse::<MutationType>().is_err());
    }

    #[test]
    fn evidence_biconditional() {
        assert!(normalize_evidence(Label::Nei, &[]).unwrap().is_empty());
        assert!(normalize_evidence(Label::Supports, &[]).is_err());
        assert!(normalize_evidence(Label::Nei, &[vec!["p".into()]]).is_err());
        assert!(normalize_evidence(Label::Refutes, &[vec![]]).is_err());
        let sets = vec![vec!["p1".into()], vec!["p3".into(), "p2".into()], vec!["p1".into()]];
        assert_eq!(
            normalize_evidence(Label::Supports, &sets).unwrap(),
            vec![vec!["p1".to_string()], vec!["p2".into(), "p3".into()]]
        );
    }
}
