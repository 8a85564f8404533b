//! Manual precision check of localized claim-evidence pairs.
//!
//! A seeded sample of verifiable claims is exported with evidence texts. An
//! annotator fills in `verdict` (the label the target evidence supports) and
//! flags bad translations; ingesting the filled file yields a confusion matrix
//! of original vs. annotated labels and the share of valid pairs.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DocumentLookup, LocalizedClaim};
use crate::error::{Error, Result};
use crate::types::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceText {
    pub doc_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityItem {
    pub claim_id: String,
    pub claim: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_claim: Option<String>,
    pub label: Label,
    pub evidence: Vec<Vec<EvidenceText>>,
    /// Filled by the annotator.
    #[serde(default)]
    pub verdict: Option<Label>,
    #[serde(default)]
    pub bad_translation: bool,
    #[serde(default)]
    pub notes: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidityOutcome {
    /// The target evidence yields the original verdict.
    Valid,
    /// The target evidence is not enough to decide.
    NeiInTarget,
    BadTranslation,
    /// The target evidence yields the opposite verdict.
    LabelChanged,
}

impl ValidityItem {
    pub fn outcome(&self) -> Option<ValidityOutcome> {
        let v = self.verdict?;
        Some(if self.bad_translation {
            ValidityOutcome::BadTranslation
        } else if v == self.label {
            ValidityOutcome::Valid
        } else if v == Label::Nei {
            ValidityOutcome::NeiInTarget
        } else {
            ValidityOutcome::LabelChanged
        })
    }
}

/// Uniform sample of `round(fraction * n)` verifiable claims (at least one when
/// any exist), in input order.
pub fn validity_sample(
    claims: &[LocalizedClaim],
    fraction: f64,
    seed: u64,
    docs: &dyn DocumentLookup,
) -> Result<Vec<ValidityItem>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("fraction must be in (0, 1], got {fraction}")));
    }
    let verifiable: Vec<&LocalizedClaim> = claims.iter().filter(|c| c.label.is_verifiable()).collect();
    if verifiable.is_empty() {
        return Ok(Vec::new());
    }
    let n = ((fraction * verifiable.len() as f64).round() as usize).clamp(1, verifiable.len());
    let mut picked = rand::seq::index::sample(&mut ChaCha8Rng::seed_from_u64(seed), verifiable.len(), n).into_vec();
    picked.sort_unstable();
    picked
        .into_iter()
        .map(|i| {
            let c = verifiable[i];
            let evidence = c
                .evidence
                .iter()
                .map(|set| {
                    set.iter()
                        .map(|id| {
                            let text = docs.text(id).ok_or_else(|| Error::not_found(format!("evidence document {id}")))?;
                            Ok(EvidenceText { doc_id: id.clone(), text: text.to_string() })
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ValidityItem {
                claim_id: c.id.clone(),
                claim: c.claim.clone(),
                source_claim: c.source_claim.clone(),
                label: c.label,
                evidence,
                verdict: None,
                bad_translation: false,
                notes: String::new(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    /// Rows original label, columns annotated verdict, in label order.
    pub confusion: [[usize; 3]; 3],
    pub outcomes: BTreeMap<ValidityOutcome, usize>,
    pub annotated: usize,
    pub unannotated: usize,
    /// Valid / annotated, in percent.
    pub precision: f64,
}

pub fn ingest_validity(items: &[ValidityItem]) -> ValidityReport {
    let mut r = ValidityReport::default();
    for item in items {
        match (item.verdict, item.outcome()) {
            (Some(v), Some(o)) => {
                r.annotated += 1;
                r.confusion[item.label.index()][v.index()] += 1;
                *r.outcomes.entry(o).or_default() += 1;
            }
            _ => r.unannotated += 1,
        }
    }
    if r.annotated > 0 {
        let valid = r.outcomes.get(&ValidityOutcome::Valid).copied().unwrap_or(0);
        r.precision = 100.0 * valid as f64 / r.annotated as f64;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localization::TargetCorpus;

    fn claims() -> Vec<LocalizedClaim> {
        (0..6)
            .map(|i| LocalizedClaim {
                id: i.to_string(),
                claim: format!("c{i}"),
                source_claim: None,
                label: Label::from_index(i % 3).unwrap(),
                evidence: if i % 3 == 2 { vec![] } else { vec![vec!["D".into()]] },
                split: None,
            })
            .collect()
    }

    #[test]
    fn full_fraction_takes_all_verifiable() {
        let t = TargetCorpus::from_pairs([("D", "doc")]);
        let s = validity_sample(&claims(), 1.0, 0, &t).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s[0].evidence[0][0].text, "doc");
        assert!(validity_sample(&claims(), 0.0, 0, &t).is_err());
        assert!(validity_sample(&claims(), 1.5, 0, &t).is_err());
    }

    #[test]
    fn precision_two_of_three() {
        let t = TargetCorpus::from_pairs([("D", "doc")]);
        let mut s = validity_sample(&claims(), 1.0, 0, &t).unwrap();
        s[0].verdict = Some(s[0].label);
        s[1].verdict = Some(s[1].label);
        s[2].verdict = Some(Label::Nei);
        let r = ingest_validity(&s);
        assert_eq!(r.annotated, 3);
        assert_eq!(r.unannotated, 1);
        assert!((r.precision - 200.0 / 3.0).abs() < 1e-9);
        assert_eq!(r.outcomes[&ValidityOutcome::NeiInTarget], 1);
    }
}
