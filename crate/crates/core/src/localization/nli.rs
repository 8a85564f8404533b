use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DocumentLookup, LocalizedClaim};
use crate::error::{Error, Result};
use crate::retrieval::Retriever;
use crate::text::split_sentences;
use crate::types::Label;

/// Inclusive range of sentences sampled for NEI contexts.
pub const NEI_SENTENCES: (usize, usize) = (3, 5);

/// Separator between evidence documents in a context.
pub const CONTEXT_SEPARATOR: &str = "\n\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NliProvenance {
    GoldEvidence,
    SampledNei,
    SourceParagraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliPair {
    pub context: String,
    pub query: String,
    pub label: Label,
    pub provenance: NliProvenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim_id: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NliReport {
    pub pairs: usize,
    /// `(claim id, reason)` for claims without a pair.
    pub skipped: Vec<(String, String)>,
}

/// Evidence documents of all sets, first occurrence order, joined by a blank line.
fn gold_context(c: &LocalizedClaim, docs: &dyn DocumentLookup) -> Result<String> {
    let mut seen: Vec<&str> = Vec::new();
    for id in c.evidence.iter().flatten() {
        if !seen.contains(&id.as_str()) {
            seen.push(id);
        }
    }
    let texts = seen
        .iter()
        .map(|id| docs.text(id).ok_or_else(|| Error::not_found(format!("evidence document {id}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(texts.join(CONTEXT_SEPARATOR))
}

/// 3 to 5 contiguous sentences, both length and offset uniform.
fn sample_sentences(text: &str, rng: &mut ChaCha8Rng) -> Option<String> {
    let sentences = split_sentences(text);
    let (lo, hi) = NEI_SENTENCES;
    if sentences.len() < lo {
        return None;
    }
    let len = rng.gen_range(lo..=hi.min(sentences.len()));
    let start = rng.gen_range(0..=sentences.len() - len);
    Some(sentences[start..start + len].join(" "))
}

/// Builds one context/query pair per claim.
///
/// Verifiable claims get their evidence documents; NEI claims get a sentence
/// window from the top-ranked document. Claim `i` draws from ChaCha stream `i`,
/// so results do not depend on evaluation order.
pub fn build_nli_pairs(
    claims: &[LocalizedClaim],
    docs: &dyn DocumentLookup,
    retriever: &dyn Retriever,
    seed: u64,
) -> Result<(Vec<NliPair>, NliReport)> {
    let mut pairs = Vec::new();
    let mut report = NliReport::default();
    for (i, c) in claims.iter().enumerate() {
        let (context, provenance) = if c.label.is_verifiable() {
            (gold_context(c, docs)?, NliProvenance::GoldEvidence)
        } else {
            let ranking = retriever.retrieve(&c.claim, 1)?;
            let Some(top) = ranking.hits.first() else {
                report.skipped.push((c.id.clone(), "empty retrieval".into()));
                continue;
            };
            let text = docs.text(&top.paragraph_id).ok_or_else(|| Error::not_found(top.paragraph_id.clone()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            match sample_sentences(text, &mut rng) {
                Some(ctx) => (ctx, NliProvenance::SampledNei),
                None => {
                    report.skipped.push((c.id.clone(), format!("top document {} has fewer than 3 sentences", top.paragraph_id)));
                    continue;
                }
            }
        };
        if context.trim().is_empty() {
            report.skipped.push((c.id.clone(), "empty context".into()));
            continue;
        }
        pairs.push(NliPair { context, query: c.claim.clone(), label: c.label, provenance, claim_id: Some(c.id.clone()) });
    }
    report.pairs = pairs.len();
    Ok((pairs, report))
}
