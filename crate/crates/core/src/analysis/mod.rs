//! Dataset quality analytics.

mod agreement;
mod cues;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use agreement::{fleiss_kappa, krippendorff_alpha, LabelMatrix};
pub use cues::{
    balanced_subsamples, claim_cues, cue_stats, format_cue_table, harmonic_mean, CueConfig, CueStatistics,
};

use crate::types::Label;

/// Per-label counts, indexed by [`Label::index`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub supports: usize,
    pub refutes: usize,
    pub nei: usize,
}

impl LabelCounts {
    pub fn add(&mut self, l: Label) {
        match l {
            Label::Supports => self.supports += 1,
            Label::Refutes => self.refutes += 1,
            Label::Nei => self.nei += 1,
        }
    }

    pub fn get(&self, l: Label) -> usize {
        match l {
            Label::Supports => self.supports,
            Label::Refutes => self.refutes,
            Label::Nei => self.nei,
        }
    }

    pub fn total(&self) -> usize {
        self.supports + self.refutes + self.nei
    }
}

/// Counts per split and label. Every name in `splits` is present, possibly all-zero.
pub fn label_distribution<'a>(
    records: impl IntoIterator<Item = (&'a str, Label)>,
    splits: &[&str],
) -> BTreeMap<String, LabelCounts> {
    let mut out: BTreeMap<String, LabelCounts> = splits.iter().map(|s| (s.to_string(), LabelCounts::default())).collect();
    for (split, label) in records {
        out.entry(split.to_string()).or_default().add(label);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distribution_counts_and_zeros() {
        let recs = [("train", Label::Supports), ("train", Label::Nei), ("dev", Label::Refutes)];
        let d = label_distribution(recs, &["train", "dev", "test"]);
        assert_eq!(d["train"].total(), 2);
        assert_eq!(d["test"], LabelCounts::default());
        assert_eq!(d["dev"].get(Label::Refutes), 1);
    }
}
