//! Model-in-the-loop cleaning: stratified folds whose test splits never repeat,
//! prediction intake and an expert review queue for misclassifications.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::service::{AnnotationService, Resolution};
use super::Fold;
use crate::error::{Error, Result};
use crate::types::{Label, Split};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPrediction {
    pub claim_id: String,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    Open,
    Reviewed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub fold: u32,
    pub claim_id: String,
    /// Majority label when the prediction arrived.
    pub gold: Option<Label>,
    pub predicted: Label,
    pub status: ReviewStatus,
    #[serde(default)]
    pub reviewer: Option<String>,
    #[serde(default)]
    pub note: String,
}

/// Per-label counts of a stratum split 8:1:1, rounding dev and test to nearest.
pub fn fold_sizes(n: usize) -> (usize, usize, usize) {
    let tenth = (n as f64 / 10.0).round() as usize;
    let test = tenth.min(n);
    let dev = tenth.min(n - test);
    (n - dev - test, dev, test)
}

impl AnnotationService {
    /// New fold over claims with a majority label. Test claims are drawn only
    /// from claims no earlier fold has tested.
    pub fn create_fold(&self, actor: &str, seed: u64) -> Result<Fold> {
        self.transact(actor, Some("fold_create"), |st, ctx| {
            let traversed: BTreeSet<&str> = st.folds.iter().flat_map(|f| f.traversed.iter().map(String::as_str)).collect();
            let mut strata: [Vec<String>; 3] = Default::default();
            for c in st.claims.values().filter(|c| !c.is_initial()) {
                if let Some(l) = st.agreed(&c.id) {
                    strata[l.index()].push(c.id.clone());
                }
            }
            if strata.iter().all(Vec::is_empty) {
                return Err(Error::validation("no claims with a majority label"));
            }
            let id = st.folds.len() as u32 + 1;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(u64::from(id));
            let mut assignment = BTreeMap::new();
            let mut test_set = BTreeSet::new();
            for members in &mut strata {
                members.shuffle(&mut rng);
                let (_, n_dev, n_test) = fold_sizes(members.len());
                let (fresh, seen): (Vec<&String>, Vec<&String>) = members.iter().partition(|c| !traversed.contains(c.as_str()));
                let test: Vec<&String> = fresh.iter().take(n_test).copied().collect();
                let rest = fresh.iter().skip(test.len()).chain(seen.iter());
                let mut rest: Vec<&String> = rest.copied().collect();
                rest.shuffle(&mut rng);
                for c in &test {
                    assignment.insert((*c).clone(), Split::Test);
                    test_set.insert((*c).clone());
                }
                for (i, c) in rest.into_iter().enumerate() {
                    assignment.insert(c.clone(), if i < n_dev { Split::Dev } else { Split::Train });
                }
            }
            let fold = Fold { id, seed, assignment, traversed: test_set, created_at: ctx.now };
            st.folds.push(fold.clone());
            let detail = json!({"fold": id, "seed": seed, "test": fold.traversed.len(), "claims": fold.assignment.len()});
            Ok((fold, detail))
        })
    }

    pub fn folds(&self) -> Vec<Fold> {
        self.read(|st| st.folds.clone())
    }

    /// Queues test claims the model got wrong. Predictions must cover exactly the
    /// fold's test claims.
    pub fn submit_predictions(&self, actor: &str, fold_id: u32, predictions: &[FoldPrediction]) -> Result<Vec<ReviewItem>> {
        self.transact(actor, Some("fold_predictions"), |st, _| {
            let fold = st
                .folds
                .iter()
                .find(|f| f.id == fold_id)
                .ok_or_else(|| Error::not_found(format!("fold {fold_id}")))?;
            let outside: Vec<&str> = predictions
                .iter()
                .filter(|p| fold.split_of(&p.claim_id) != Some(Split::Test))
                .map(|p| p.claim_id.as_str())
                .collect();
            if !outside.is_empty() {
                return Err(Error::validation(format!("predictions for claims outside the test split: {outside:?}")));
            }
            let given: BTreeSet<&str> = predictions.iter().map(|p| p.claim_id.as_str()).collect();
            let missing: Vec<&str> = fold.traversed.iter().map(String::as_str).filter(|c| !given.contains(c)).collect();
            if !missing.is_empty() {
                return Err(Error::validation(format!("missing predictions for {} test claims", missing.len())));
            }
            let mut queued = Vec::new();
            for p in predictions {
                let gold = st.agreed(&p.claim_id);
                if gold == Some(p.label) {
                    continue;
                }
                if st.review.iter().any(|r| r.fold == fold_id && r.claim_id == p.claim_id) {
                    continue;
                }
                queued.push(ReviewItem {
                    fold: fold_id,
                    claim_id: p.claim_id.clone(),
                    gold,
                    predicted: p.label,
                    status: ReviewStatus::Open,
                    reviewer: None,
                    note: String::new(),
                });
            }
            st.review.extend(queued.iter().cloned());
            let detail = json!({"fold": fold_id, "predictions": predictions.len(), "queued": queued.len()});
            Ok((queued, detail))
        })
    }

    pub fn review_queue(&self) -> Vec<ReviewItem> {
        self.read(|st| st.review.iter().filter(|r| r.status == ReviewStatus::Open).cloned().collect())
    }

    /// Closes the open review item of a claim, applying retractions and an
    /// optional corrective annotation.
    pub fn apply_review(&self, reviewer: &str, claim_id: &str, change: &Resolution, note: &str) -> Result<ReviewItem> {
        self.transact(reviewer, Some("review_apply"), |st, ctx| {
            let idx = st
                .review
                .iter()
                .position(|r| r.claim_id == claim_id && r.status == ReviewStatus::Open)
                .ok_or_else(|| Error::not_found(format!("open review item for {claim_id}")))?;
            let corrective = self.amend(st, ctx.now, reviewer, claim_id, change)?;
            let item = &mut st.review[idx];
            item.status = ReviewStatus::Reviewed;
            item.reviewer = Some(reviewer.to_string());
            item.note = note.to_string();
            let item = item.clone();
            let detail = json!({"claim": claim_id, "retracted": change.retract, "corrective": corrective, "note": note});
            Ok((item, detail))
        })
    }
}
