//! Spurious-cue statistics over claim texts.
//!
//! For a cue `k` on a label-balanced sample `A`:
//!
//! ```text
//! productivity  π_k = max_c |A[cue=k] ∩ A[class=c]| / |A[cue=k]|
//! coverage      ξ_k = |A[cue=k]| / |A|
//! ```
//!
//! Unbalanced data is handled by averaging over seeded subsamples in which every
//! class is downsampled to the minority-class size. Productivity is averaged over
//! the subsamples in which the cue occurs; coverage over all subsamples.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{split_sentences, tokenize};
use crate::types::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueStatistics {
    pub cue: String,
    pub order: usize,
    pub majority_label: Label,
    pub productivity: f64,
    pub coverage: f64,
    pub harmonic_mean: f64,
}

pub fn harmonic_mean(productivity: f64, coverage: f64) -> f64 {
    if productivity + coverage > 0.0 {
        2.0 * productivity * coverage / (productivity + coverage)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CueConfig {
    /// 1 for unigram cues, 2 for bigram cues.
    pub order: usize,
    pub subsamples: usize,
    pub seed: u64,
}

impl Default for CueConfig {
    fn default() -> Self {
        CueConfig { order: 1, subsamples: 10, seed: 0 }
    }
}

/// Distinct case-preserving cues of the given order; bigrams never cross sentences.
pub fn claim_cues(text: &str, order: usize) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for sentence in split_sentences(text) {
        let toks = tokenize(sentence);
        match order {
            1 => out.extend(toks.iter().map(|t| t.to_string())),
            _ => out.extend(toks.windows(2).map(|w| format!("{} {}", w[0], w[1]))),
        }
    }
    out
}

/// Index sets of label-balanced subsamples drawn without replacement.
///
/// Subsample `s` uses ChaCha stream `s` of `seed`, so subsamples are independent
/// of evaluation order.
pub fn balanced_subsamples(labels: &[Label], subsamples: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let mut by_class: [Vec<usize>; 3] = Default::default();
    for (i, l) in labels.iter().enumerate() {
        by_class[l.index()].push(i);
    }
    if let Some(empty) = Label::ALL.iter().find(|l| by_class[l.index()].is_empty()) {
        return Err(Error::invalid(format!("class {empty} has no claims")));
    }
    let minority = by_class.iter().map(Vec::len).min().unwrap();
    Ok((0..subsamples)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let mut picked = Vec::with_capacity(minority * 3);
            for members in &by_class {
                let idx = rand::seq::index::sample(&mut rng, members.len(), minority);
                picked.extend(idx.into_iter().map(|i| members[i]));
            }
            picked.sort_unstable();
            picked
        })
        .collect())
}

struct SubsampleCounts {
    size: usize,
    per_cue: BTreeMap<String, [usize; 3]>,
}

pub fn cue_stats(claims: &[(String, Label)], config: &CueConfig) -> Result<Vec<CueStatistics>> {
    if !(1..=2).contains(&config.order) {
        return Err(Error::invalid(format!("cue order must be 1 or 2, got {}", config.order)));
    }
    if config.subsamples == 0 {
        return Err(Error::invalid("need at least one subsample"));
    }
    let labels: Vec<Label> = claims.iter().map(|c| c.1).collect();
    let samples = balanced_subsamples(&labels, config.subsamples, config.seed)?;
    let cues: Vec<BTreeSet<String>> = claims.par_iter().map(|(t, _)| claim_cues(t, config.order)).collect();

    let counts: Vec<SubsampleCounts> = samples
        .par_iter()
        .map(|idx| {
            let mut per_cue: BTreeMap<String, [usize; 3]> = BTreeMap::new();
            for &i in idx {
                for cue in &cues[i] {
                    per_cue.entry(cue.clone()).or_insert([0; 3])[labels[i].index()] += 1;
                }
            }
            SubsampleCounts { size: idx.len(), per_cue }
        })
        .collect();

    let mut all: BTreeSet<&String> = BTreeSet::new();
    for c in &counts {
        all.extend(c.per_cue.keys());
    }
    let n_samples = counts.len() as f64;
    let mut stats: Vec<CueStatistics> = all
        .into_iter()
        .map(|cue| {
            let mut prod_sum = 0.0;
            let mut prod_n = 0usize;
            let mut cov_sum = 0.0;
            let mut totals = [0usize; 3];
            for c in &counts {
                if let Some(per) = c.per_cue.get(cue) {
                    let n: usize = per.iter().sum();
                    prod_sum += *per.iter().max().unwrap() as f64 / n as f64;
                    prod_n += 1;
                    cov_sum += n as f64 / c.size as f64;
                    for j in 0..3 {
                        totals[j] += per[j];
                    }
                }
            }
            let productivity = prod_sum / prod_n as f64;
            let coverage = cov_sum / n_samples;
            let majority = (0..3).max_by(|&a, &b| totals[a].cmp(&totals[b]).then(b.cmp(&a))).unwrap();
            CueStatistics {
                cue: cue.clone(),
                order: config.order,
                majority_label: Label::from_index(majority).unwrap(),
                productivity,
                coverage,
                harmonic_mean: harmonic_mean(productivity, coverage),
            }
        })
        .collect();
    stats.sort_by(|a, b| {
        b.harmonic_mean
            .total_cmp(&a.harmonic_mean)
            .then(b.coverage.total_cmp(&a.coverage))
            .then(a.cue.cmp(&b.cue))
    });
    Ok(stats)
}

/// Plain-text table: rank, cue, label, productivity, coverage, h. mean.
pub fn format_cue_table(stats: &[CueStatistics], top: usize) -> String {
    let mut out = format!("{:>4}  {:<24} {:<5} {:>12} {:>9} {:>8}\n", "rank", "cue", "label", "productivity", "coverage", "h. mean");
    for (i, s) in stats.iter().take(top).enumerate() {
        out.push_str(&format!(
            "{:>4}  {:<24} {:<5} {:>12.2} {:>9.2} {:>8.2}\n",
            i + 1,
            s.cue,
            s.majority_label.short(),
            s.productivity,
            s.coverage,
            s.harmonic_mean
        ));
    }
    out
}
