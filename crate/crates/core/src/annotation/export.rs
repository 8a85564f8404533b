use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::service::AnnotationService;
use super::MutationType;
use crate::analysis::LabelMatrix;
use crate::error::{Error, Result};
use crate::localization::{NliPair, NliProvenance};
use crate::types::{Label, Split};

pub const SPLIT_RATIOS: [f64; 3] = [0.8, 0.1, 0.1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrRecord {
    pub id: String,
    pub claim: String,
    pub label: Label,
    pub evidence: Vec<Vec<String>>,
    pub split: Split,
    pub source_paragraph: String,
    pub mutation: MutationType,
    pub parent: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliExportRecord {
    pub split: Split,
    #[serde(flatten)]
    pub pair: NliPair,
}

/// Assigns whole groups to splits so that every label approaches `ratios`.
///
/// Groups are shuffled by `seed`, then visited largest first; each goes to the
/// split with the largest label-weighted relative deficit, ties in
/// train/dev/test order.
pub fn group_stratified_split(groups: &BTreeMap<String, [usize; 3]>, ratios: [f64; 3], seed: u64) -> BTreeMap<String, Split> {
    let totals: [usize; 3] = groups.values().fold([0; 3], |mut acc, g| {
        (0..3).for_each(|l| acc[l] += g[l]);
        acc
    });
    let rsum: f64 = ratios.iter().sum();
    let target = |s: usize, l: usize| ratios[s] / rsum * totals[l] as f64;
    let mut order: Vec<(&String, &[usize; 3])> = groups.iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.sort_by_key(|(_, g)| std::cmp::Reverse(g.iter().sum::<usize>()));

    let mut current = [[0usize; 3]; 3];
    let mut out = BTreeMap::new();
    for (key, g) in order {
        let score = |s: usize| -> (f64, f64) {
            let need = |l: usize| {
                let t = target(s, l);
                if t > 0.0 { (t - current[s][l] as f64) / t } else { 0.0 }
            };
            let weighted: f64 = (0..3).map(|l| g[l] as f64 * need(l)).sum();
            let total: f64 = (0..3).map(need).sum();
            (weighted, total)
        };
        let mut best = 0;
        for s in 1..3 {
            let (a, b) = (score(s), score(best));
            if a.0 > b.0 + 1e-12 || ((a.0 - b.0).abs() <= 1e-12 && a.1 > b.1 + 1e-12) {
                best = s;
            }
        }
        (0..3).for_each(|l| current[best][l] += g[l]);
        out.insert(key.clone(), Split::ALL[best]);
    }
    out
}

impl AnnotationService {
    /// Labeled mutation claims with their merged evidence and a split. Refused
    /// while any conflict is open.
    pub fn export_dr(&self, seed: u64) -> Result<Vec<DrRecord>> {
        self.read(|st| {
            let open = st.open_conflicts();
            if !open.is_empty() {
                let ids: Vec<&str> = open.iter().map(|(c, _)| c.as_str()).collect();
                return Err(Error::Conflict(ids.join(", ")));
            }
            let mut rows = Vec::new();
            let mut groups: BTreeMap<String, [usize; 3]> = BTreeMap::new();
            for c in st.claims.values().filter(|c| !c.is_initial()) {
                let Some(label) = st.agreed(&c.id) else { continue };
                groups.entry(c.source_paragraph.clone()).or_default()[label.index()] += 1;
                rows.push((c, label, st.merged_evidence(&c.id)?));
            }
            let splits = group_stratified_split(&groups, SPLIT_RATIOS, seed);
            Ok(rows
                .into_iter()
                .map(|(c, label, evidence)| DrRecord {
                    id: c.id.clone(),
                    claim: c.text.clone(),
                    label,
                    evidence,
                    split: splits[&c.source_paragraph],
                    source_paragraph: c.source_paragraph.clone(),
                    mutation: c.mutation,
                    parent: c.parent.clone(),
                })
                .collect())
        })
    }

    /// One pair per merged evidence set of every verifiable claim and one
    /// source-paragraph pair per NEI claim, split as in [`export_dr`](Self::export_dr).
    pub fn export_nli(&self, seed: u64) -> Result<Vec<NliExportRecord>> {
        let corpus = self.corpus().clone();
        let text = |id: &str| corpus.get_paragraph(id).map(|p| p.text.clone());
        let mut out = Vec::new();
        for r in self.export_dr(seed)? {
            if r.label == Label::Nei {
                out.push(NliExportRecord {
                    split: r.split,
                    pair: NliPair {
                        context: text(&r.source_paragraph)?,
                        query: r.claim.clone(),
                        label: r.label,
                        provenance: NliProvenance::SourceParagraph,
                        claim_id: Some(r.id.clone()),
                    },
                });
                continue;
            }
            for set in &r.evidence {
                let context = set.iter().map(|p| text(p)).collect::<Result<Vec<_>>>()?.join("\n\n");
                out.push(NliExportRecord {
                    split: r.split,
                    pair: NliPair {
                        context,
                        query: r.claim.clone(),
                        label: r.label,
                        provenance: NliProvenance::GoldEvidence,
                        claim_id: Some(r.id.clone()),
                    },
                });
            }
        }
        Ok(out)
    }

    /// Claims by annotators over mutation claims. Retracted annotations are
    /// missing unless `retracted_category` names a fourth category for them.
    pub fn agreement_matrix(&self, retracted_category: Option<&str>) -> LabelMatrix {
        self.read(|st| {
            let annotators: BTreeSet<&str> = st.annotations.values().map(|a| a.annotator.as_str()).collect();
            let col: BTreeMap<&str, usize> = annotators.iter().enumerate().map(|(i, a)| (*a, i)).collect();
            let mut rows: BTreeMap<&str, Vec<Option<String>>> = BTreeMap::new();
            for a in st.annotations.values() {
                if st.claims.get(&a.claim_id).is_none_or(|c| c.is_initial()) {
                    continue;
                }
                let cell = if a.counts() { Some(a.label.short().to_string()) } else { retracted_category.map(str::to_string) };
                let row = rows.entry(&a.claim_id).or_insert_with(|| vec![None; col.len()]);
                if cell.is_some() {
                    row[col[a.annotator.as_str()]] = cell;
                }
            }
            LabelMatrix::from_names(&rows.into_values().collect::<Vec<_>>())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_never_straddle_splits_and_ratios_hold() {
        let groups: BTreeMap<String, [usize; 3]> =
            (0..300).map(|i| (format!("p{i}"), [1 + i % 2, i % 3, usize::from(i % 5 == 0)])).collect();
        let a = group_stratified_split(&groups, SPLIT_RATIOS, 4);
        assert_eq!(a.len(), groups.len());
        let mut per = [[0usize; 3]; 3];
        for (k, s) in &a {
            (0..3).for_each(|l| per[*s as usize][l] += groups[k][l]);
        }
        for l in 0..3 {
            let total: usize = per.iter().map(|row| row[l]).sum();
            let test_share = per[2][l] as f64 / total as f64;
            assert!((test_share - 0.1).abs() < 0.03, "label {l}: {test_share}");
        }
        assert_eq!(a, group_stratified_split(&groups, SPLIT_RATIOS, 4));
    }
}
