use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LocalizedClaim;
use crate::analysis::LabelCounts;
use crate::error::{Error, Result};
use crate::types::{Label, Split};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResplitReport {
    pub counts: BTreeMap<Split, LabelCounts>,
    /// Evidence documents cited by claims in more than one split.
    pub shared_pages: usize,
}

/// Assigns exactly `dev_per_class` and `test_per_class` claims of every label to
/// dev and test; everything else goes to train. Returns the claims in input order
/// with `split` set.
pub fn resplit(
    claims: &[LocalizedClaim],
    dev_per_class: usize,
    test_per_class: usize,
    seed: u64,
) -> Result<(Vec<LocalizedClaim>, ResplitReport)> {
    let mut ids = HashSet::new();
    if let Some(dup) = claims.iter().find(|c| !ids.insert(c.id.as_str())) {
        return Err(Error::invalid(format!("duplicate claim id {}", dup.id)));
    }
    let mut by_class: [Vec<usize>; 3] = Default::default();
    for (i, c) in claims.iter().enumerate() {
        by_class[c.label.index()].push(i);
    }
    let need = dev_per_class + test_per_class;
    for l in Label::ALL {
        let have = by_class[l.index()].len();
        if have < need {
            return Err(Error::invalid(format!("class {l} has {have} claims, {need} needed for dev and test")));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assigned = vec![Split::Train; claims.len()];
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for (j, &i) in members.iter().enumerate().take(need) {
            assigned[i] = if j < dev_per_class { Split::Dev } else { Split::Test };
        }
    }

    let mut report = ResplitReport::default();
    for s in Split::ALL {
        report.counts.insert(s, LabelCounts::default());
    }
    let mut page_splits: BTreeMap<&str, BTreeSet<Split>> = BTreeMap::new();
    let out = claims
        .iter()
        .zip(&assigned)
        .map(|(c, &s)| {
            report.counts.get_mut(&s).unwrap().add(c.label);
            for doc in c.evidence.iter().flatten() {
                page_splits.entry(doc).or_default().insert(s);
            }
            LocalizedClaim { split: Some(s), ..c.clone() }
        })
        .collect();
    report.shared_pages = page_splits.values().filter(|s| s.len() > 1).count();
    if report.shared_pages > 0 {
        tracing::warn!(shared = report.shared_pages, "evidence pages shared across splits");
    }
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(n: usize) -> Vec<LocalizedClaim> {
        (0..n)
            .map(|i| LocalizedClaim {
                id: format!("c{i}"),
                claim: String::new(),
                source_claim: None,
                label: Label::from_index(i % 3).unwrap(),
                evidence: if i % 3 == 2 { vec![] } else { vec![vec![format!("p{}", i % 7)]] },
                split: None,
            })
            .collect()
    }

    #[test]
    fn exact_counts_and_determinism() {
        let (a, r) = resplit(&fixture(30), 2, 2, 9).unwrap();
        for l in Label::ALL {
            assert_eq!(r.counts[&Split::Dev].get(l), 2);
            assert_eq!(r.counts[&Split::Test].get(l), 2);
            assert_eq!(r.counts[&Split::Train].get(l), 6);
        }
        assert_eq!(a, resplit(&fixture(30), 2, 2, 9).unwrap().0);
    }

    #[test]
    fn zero_requests_leave_all_in_train() {
        let (a, _) = resplit(&fixture(9), 0, 0, 1).unwrap();
        assert!(a.iter().all(|c| c.split == Some(Split::Train)));
    }

    #[test]
    fn shortage_names_the_class() {
        let mut f = fixture(30);
        f.retain(|c| c.label != Label::Refutes || c.id == "c1");
        let err = resplit(&f, 1, 1, 0).unwrap_err().to_string();
        assert!(err.contains("REFUTES"), "{err}");
    }
}
