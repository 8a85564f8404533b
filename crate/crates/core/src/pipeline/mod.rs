//! Full fact-verification evaluation: retrieve, split, score, aggregate.
//!
//! Retrieved paragraphs are packed greedily into consecutive splits that fit the
//! scorer's input budget. Split triples are combined with geometric weights
//! `λ^i` normalized by their sum, so a single split passes through unchanged.

mod scorer;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use scorer::{
    scoring_router, LexicalOverlapScorer, NliInput, NliScorer, RemoteScorer, ScoreRequest, ScoreResponse,
};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::retrieval::Retriever;
use crate::text::{token_count, tokenize};
use crate::types::Label;

/// Separator allowance added to claim tokens when budgeting a split.
pub const SEPARATOR_TOKENS: usize = 3;
pub const DEFAULT_MAX_INPUT: usize = 512;
pub const DEFAULT_LAMBDA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceTriple {
    pub supports: f64,
    pub refutes: f64,
    pub nei: f64,
}

impl ConfidenceTriple {
    pub fn new(supports: f64, refutes: f64, nei: f64) -> Self {
        ConfidenceTriple { supports, refutes, nei }
    }

    pub fn get(&self, l: Label) -> f64 {
        match l {
            Label::Supports => self.supports,
            Label::Refutes => self.refutes,
            Label::Nei => self.nei,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for v in [self.supports, self.refutes, self.nei] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(format!("confidence {v} must be finite and non-negative")));
            }
        }
        Ok(())
    }

    /// Highest confidence; any tie for the maximum resolves to NEI.
    pub fn argmax(&self) -> Label {
        let max = self.supports.max(self.refutes).max(self.nei);
        let winners: Vec<Label> = Label::ALL.into_iter().filter(|&l| self.get(l) == max).collect();
        if winners.len() == 1 {
            winners[0]
        } else {
            Label::Nei
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        ConfidenceTriple::new(self.supports * c, self.refutes * c, self.nei * c)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceSplit {
    pub members: Vec<String>,
    /// Sum of member token counts before any truncation.
    pub token_count: usize,
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub max_input: usize,
    /// Maximum number of documents per split.
    pub k_s: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { max_input: DEFAULT_MAX_INPUT, k_s: 2 }
    }
}

/// Greedy consecutive packing of `(id, tokens)` under `max_input - overhead` tokens
/// and at most `k_s` documents per split. A document that alone exceeds the
/// budget becomes its own truncated split.
pub fn partition_splits(docs: &[(String, usize)], config: SplitConfig, overhead: usize) -> Result<Vec<EvidenceSplit>> {
    if config.k_s == 0 {
        return Err(Error::invalid("k_s must be >= 1"));
    }
    let budget = config.max_input.saturating_sub(overhead);
    let mut out = Vec::new();
    let mut cur = EvidenceSplit { members: Vec::new(), token_count: 0, truncated: false };
    for (id, tokens) in docs {
        if !cur.members.is_empty() && (cur.token_count + tokens > budget || cur.members.len() == config.k_s) {
            out.push(std::mem::replace(&mut cur, EvidenceSplit { members: Vec::new(), token_count: 0, truncated: false }));
        }
        if *tokens > budget {
            out.push(EvidenceSplit { members: vec![id.clone()], token_count: *tokens, truncated: true });
            continue;
        }
        cur.members.push(id.clone());
        cur.token_count += tokens;
    }
    if !cur.members.is_empty() {
        out.push(cur);
    }
    Ok(out)
}

/// `y^c = Σ λ^i y_i^c / Σ λ^i` over splits in retrieval order, with `0^0 = 1`.
pub fn aggregate(triples: &[ConfidenceTriple], lambda: f64) -> Result<ConfidenceTriple> {
    if triples.is_empty() {
        return Err(Error::invalid("aggregate needs at least one split"));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let mut acc = ConfidenceTriple::new(0.0, 0.0, 0.0);
    let mut weight_sum = 0.0;
    let mut w = 1.0;
    for t in triples {
        acc.supports += w * t.supports;
        acc.refutes += w * t.refutes;
        acc.nei += w * t.nei;
        weight_sum += w;
        w *= lambda;
    }
    Ok(acc.scale(1.0 / weight_sum))
}

/// Prefix of `text` holding at most `n` tokens.
pub fn truncate_to_tokens(text: &str, n: usize) -> &str {
    if n == 0 {
        return "";
    }
    let mut seen = 0;
    let mut in_tok = false;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            in_tok = true;
        } else if in_tok {
            in_tok = false;
            seen += 1;
            if seen == n {
                return &text[..i];
            }
        }
    }
    text
}

/// 3x3 counts, rows = gold, columns = predicted, both in [`Label::index`] order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion(pub [[usize; 3]; 3]);

impl Confusion {
    pub fn add(&mut self, gold: Label, predicted: Label) {
        self.0[gold.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> usize {
        self.0.iter().flatten().sum()
    }
}

pub fn accuracy(c: &Confusion) -> f64 {
    let total = c.total();
    if total == 0 {
        return 0.0;
    }
    (0..3).map(|i| c.0[i][i]).sum::<usize>() as f64 / total as f64
}

/// Unweighted mean of per-class F1; a class with precision + recall = 0 scores 0.
pub fn f1_macro(c: &Confusion) -> f64 {
    let mut sum = 0.0;
    for i in 0..3 {
        let tp = c.0[i][i] as f64;
        let predicted: usize = (0..3).map(|g| c.0[g][i]).sum();
        let gold: usize = c.0[i].iter().sum();
        let p = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
        let r = if gold == 0 { 0.0 } else { tp / gold as f64 };
        sum += if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    }
    sum / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Label match and a fully retrieved gold evidence set.
    Se,
    /// Label match only.
    Nse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    F1Macro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalClaim {
    pub id: String,
    pub claim: String,
    pub label: Label,
    /// Gold evidence sets of paragraph ids; empty for NEI.
    #[serde(default)]
    pub evidence: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    pub split: SplitConfig,
    pub lambda: f64,
    /// Upper bound on worker threads; the scorer's own limit also applies.
    pub workers: Option<usize>,
    /// Claims per scorer call.
    pub batch_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { ks: vec![1, 5, 10, 20], split: SplitConfig::default(), lambda: DEFAULT_LAMBDA, workers: None, batch_size: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineVerdict {
    pub claim_id: String,
    pub k: usize,
    pub predicted: Label,
    pub triple: ConfidenceTriple,
    pub retrieved: Vec<String>,
    /// Some gold evidence set is contained in `retrieved`.
    pub evidence_covered: bool,
}

impl PipelineVerdict {
    pub fn correct(&self, gold: Label, mode: Mode) -> bool {
        if self.predicted != gold {
            return false;
        }
        match mode {
            Mode::Nse => true,
            Mode::Se => gold == Label::Nei || self.evidence_covered,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KScores {
    pub nse: Confusion,
    /// Correct labels without covered evidence are booked as NEI predictions.
    pub se: Confusion,
}

impl KScores {
    pub fn score(&self, mode: Mode, metric: Metric) -> f64 {
        let c = match mode {
            Mode::Se => &self.se,
            Mode::Nse => &self.nse,
        };
        match metric {
            Metric::Accuracy => accuracy(c),
            Metric::F1Macro => f1_macro(c),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_k: BTreeMap<usize, KScores>,
    pub verdicts: Vec<PipelineVerdict>,
    /// (claim id, message) for claims excluded after a scorer or retrieval failure.
    pub errors: Vec<(String, String)>,
}

impl EvalReport {
    /// Percent score at cutoff `k`.
    pub fn score(&self, k: usize, mode: Mode, metric: Metric) -> Option<f64> {
        self.per_k.get(&k).map(|s| 100.0 * s.score(mode, metric))
    }

    /// Rows per k with NSE and SE columns.
    pub fn table(&self, metric: Metric) -> String {
        let name = match metric {
            Metric::Accuracy => "accuracy",
            Metric::F1Macro => "F1 macro",
        };
        let mut out = String::from("# split weights: lambda^i normalized by sum_i lambda^i over splits\n");
        out.push_str(&format!("{:>4} {:>10} {:>10}   ({name}, %)\n", "k", "NSE", "SE"));
        for (k, s) in &self.per_k {
            out.push_str(&format!(
                "{:>4} {:>10.2} {:>10.2}\n",
                k,
                100.0 * s.score(Mode::Nse, metric),
                100.0 * s.score(Mode::Se, metric)
            ));
        }
        out
    }
}

fn covers(gold: &[Vec<String>], retrieved: &BTreeSet<&str>) -> bool {
    gold.iter().any(|set| !set.is_empty() && set.iter().all(|id| retrieved.contains(id.as_str())))
}

fn evaluate_claim(
    claim: &EvalClaim,
    corpus: &Corpus,
    retriever: &dyn Retriever,
    scorer: &dyn NliScorer,
    config: &EvalConfig,
) -> Result<Vec<PipelineVerdict>> {
    let max_k = *config.ks.iter().max().unwrap();
    let ranking = retriever.retrieve(&claim.claim, max_k)?;
    let docs: Vec<(String, usize)> = ranking
        .hits
        .iter()
        .map(|h| Ok((h.paragraph_id.clone(), token_count(&corpus.get_paragraph(&h.paragraph_id)?.text))))
        .collect::<Result<_>>()?;
    let overhead = tokenize(&claim.claim).len() + SEPARATOR_TOKENS;
    let budget = config.split.max_input.saturating_sub(overhead);

    let mut plans = Vec::new();
    let mut pending: Vec<Vec<String>> = Vec::new();
    let mut seen: BTreeSet<Vec<String>> = BTreeSet::new();
    for &k in &config.ks {
        let prefix = &docs[..k.min(docs.len())];
        let splits = partition_splits(prefix, config.split, overhead)?;
        for s in &splits {
            if seen.insert(s.members.clone()) {
                pending.push(s.members.clone());
            }
        }
        plans.push((k, prefix.iter().map(|d| d.0.clone()).collect::<Vec<_>>(), splits));
    }

    let mut scored: HashMap<Vec<String>, ConfidenceTriple> = HashMap::new();
    for chunk in pending.chunks(config.batch_size.max(1)) {
        let inputs = chunk
            .iter()
            .map(|members| {
                let texts = members
                    .iter()
                    .map(|id| Ok(corpus.get_paragraph(id)?.text.as_str()))
                    .collect::<Result<Vec<_>>>()?;
                let context = texts.join("\n\n");
                Ok(NliInput { claim: claim.claim.clone(), context: truncate_to_tokens(&context, budget).to_string() })
            })
            .collect::<Result<Vec<_>>>()?;
        let triples = scorer.score_batch(&inputs)?;
        if triples.len() != inputs.len() {
            return Err(Error::Remote("scorer returned a short batch".into()));
        }
        for (m, t) in chunk.iter().zip(triples) {
            t.validate()?;
            scored.insert(m.clone(), t);
        }
    }

    Ok(plans
        .into_iter()
        .map(|(k, retrieved, splits)| {
            let triple = if splits.is_empty() {
                ConfidenceTriple::new(0.0, 0.0, 0.0)
            } else {
                let ts: Vec<ConfidenceTriple> = splits.iter().map(|s| scored[&s.members]).collect();
                aggregate(&ts, config.lambda).expect("non-empty, lambda validated")
            };
            let set: BTreeSet<&str> = retrieved.iter().map(String::as_str).collect();
            PipelineVerdict {
                claim_id: claim.id.clone(),
                k,
                predicted: triple.argmax(),
                triple,
                evidence_covered: covers(&claim.evidence, &set),
                retrieved,
            }
        })
        .collect())
}

/// Runs the whole pipeline for every claim and cutoff. Output order follows input order.
pub fn evaluate(
    claims: &[EvalClaim],
    corpus: &Corpus,
    retriever: &dyn Retriever,
    scorer: &dyn NliScorer,
    config: &EvalConfig,
) -> Result<EvalReport> {
    if config.ks.is_empty() || config.ks.contains(&0) {
        return Err(Error::invalid("cutoffs must be non-empty and >= 1"));
    }
    if !(config.lambda.is_finite() && config.lambda >= 0.0) {
        return Err(Error::invalid("lambda must be finite and >= 0"));
    }
    if config.split.k_s == 0 {
        return Err(Error::invalid("k_s must be >= 1"));
    }
    let threads = [config.workers, scorer.max_concurrency()]
        .into_iter()
        .flatten()
        .min()
        .unwrap_or_else(rayon::current_num_threads)
        .max(1);
    let run = |c: &EvalClaim| evaluate_claim(c, corpus, retriever, scorer, config);
    // A single worker runs inline, which keeps nested calls from inside another pool cheap.
    let outcomes: Vec<Result<Vec<PipelineVerdict>>> = if threads == 1 {
        claims.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::invalid(e.to_string()))?;
        pool.install(|| claims.par_iter().map(run).collect())
    };

    let mut report = EvalReport::default();
    for &k in &config.ks {
        report.per_k.entry(k).or_default();
    }
    for (claim, outcome) in claims.iter().zip(outcomes) {
        match outcome {
            Ok(verdicts) => {
                for v in verdicts {
                    let s = report.per_k.get_mut(&v.k).unwrap();
                    s.nse.add(claim.label, v.predicted);
                    let se_pred = if v.predicted == claim.label && !v.correct(claim.label, Mode::Se) {
                        Label::Nei
                    } else {
                        v.predicted
                    };
                    s.se.add(claim.label, se_pred);
                    report.verdicts.push(v);
                }
            }
            Err(e) => report.errors.push((claim.id.clone(), e.to_string())),
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(lens: &[usize]) -> Vec<(String, usize)> {
        lens.iter().enumerate().map(|(i, &l)| (format!("d{}", i + 1), l)).collect()
    }

    fn members(s: &[EvidenceSplit]) -> Vec<Vec<&str>> {
        s.iter().map(|s| s.members.iter().map(String::as_str).collect()).collect()
    }

    #[test]
    fn greedy_packing_trace() {
        let s = partition_splits(&docs(&[200, 250, 300]), SplitConfig { max_input: 512, k_s: 2 }, 0).unwrap();
        assert_eq!(members(&s), vec![vec!["d1", "d2"], vec!["d3"]]);
        assert!(s.iter().all(|s| !s.truncated));
    }

    #[test]
    fn oversized_doc_is_truncated_alone() {
        let s = partition_splits(&docs(&[600]), SplitConfig { max_input: 512, k_s: 2 }, 0).unwrap();
        assert_eq!(s.len(), 1);
        assert!(s[0].truncated);
        let s = partition_splits(&docs(&[100, 600, 100]), SplitConfig { max_input: 512, k_s: 3 }, 0).unwrap();
        assert_eq!(members(&s), vec![vec!["d1"], vec!["d2"], vec!["d3"]]);
    }

    #[test]
    fn k_s_one_gives_one_split_per_doc() {
        let s = partition_splits(&docs(&[1, 1, 1, 1]), SplitConfig { max_input: 512, k_s: 1 }, 0).unwrap();
        assert_eq!(s.len(), 4);
        assert!(partition_splits(&[], SplitConfig::default(), 0).unwrap().is_empty());
    }

    #[test]
    fn aggregate_cases() {
        let t = ConfidenceTriple::new(0.2, 0.3, 0.5);
        assert_eq!(aggregate(&[t], 0.5).unwrap(), t);
        let two = aggregate(&[ConfidenceTriple::new(1.0, 0.0, 0.0), ConfidenceTriple::new(0.0, 1.0, 0.0)], 0.5).unwrap();
        assert!((two.supports - 2.0 / 3.0).abs() < 1e-12);
        assert!((two.refutes - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(two.nei, 0.0);
        let first = aggregate(&[t, ConfidenceTriple::new(1.0, 1.0, 1.0)], 0.0).unwrap();
        assert_eq!(first, t);
        assert!(aggregate(&[], 0.5).is_err());
    }

    #[test]
    fn argmax_ties_go_to_nei() {
        assert_eq!(ConfidenceTriple::new(0.4, 0.4, 0.2).argmax(), Label::Nei);
        assert_eq!(ConfidenceTriple::new(0.5, 0.1, 0.4).argmax(), Label::Supports);
    }

    #[test]
    fn metrics() {
        let diag = Confusion([[3, 0, 0], [0, 2, 0], [0, 0, 4]]);
        assert_eq!(accuracy(&diag), 1.0);
        assert_eq!(f1_macro(&diag), 1.0);
        // REF never predicted
        let c = Confusion([[2, 0, 0], [1, 0, 1], [0, 0, 2]]);
        let sup = 2.0 * (2.0 / 3.0) / (2.0 / 3.0 + 1.0);
        let nei = 2.0 * (2.0 / 3.0) / (2.0 / 3.0 + 1.0);
        assert!((f1_macro(&c) - (sup + 0.0 + nei) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn truncation_keeps_whole_tokens() {
        assert_eq!(truncate_to_tokens("one two, three four", 2), "one two");
        assert_eq!(truncate_to_tokens("one two", 5), "one two");
        assert_eq!(truncate_to_tokens("x", 0), "");
    }
}
