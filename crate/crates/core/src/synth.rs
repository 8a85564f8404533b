//! Deterministic synthetic fixtures: a news-like corpus and claims over it.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ArticleRecord, Corpus, FilterConfig};
use crate::error::Result;
use crate::pipeline::EvalClaim;
use crate::text::split_sentences;
use crate::types::Label;

const PEOPLE: &[&str] = &[
    "Novak", "Svoboda", "Dvorak", "Cerny", "Prochazka", "Kucera", "Vesely", "Horak", "Nemec", "Marek", "Pospisil",
    "Hajek", "Jelinek", "Kral", "Ruzicka", "Benes", "Fiala", "Sedlacek", "Dolezal", "Zeman",
];
const PLACES: &[&str] = &[
    "Prague", "Brno", "Ostrava", "Plzen", "Liberec", "Olomouc", "Budejovice", "Hradec", "Usti", "Pardubice", "Zlin",
    "Kladno", "Most", "Opava", "Jihlava",
];
const ORGS: &[&str] = &["Senate", "Parliament", "Council", "Ministry", "Tribunal", "Agency", "Union", "Academy"];
const VERBS: &[&str] = &[
    "met", "criticised", "praised", "visited", "called", "supported", "opposed", "thanked", "questioned", "joined",
];
const TOPICS: &[&str] = &[
    "the budget", "a new railway", "energy prices", "the election", "school reform", "the hospital plan",
    "flood protection", "a tax cut", "the museum", "public transport", "housing costs", "the harvest",
];
const DAYS: &[&str] = &["Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday"];
const NEI_WORDS: &[&str] = &[
    "volcano", "penguins", "submarine", "astronaut", "glacier", "saxophone", "telescope", "desert", "orchid", "comet",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub articles: usize,
    pub paragraphs_per_article: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// 50 articles of a headline and 3 paragraphs: 200 paragraphs.
    fn default() -> Self {
        SynthConfig { articles: 50, paragraphs_per_article: 3, seed: 7 }
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).expect("non-empty vocabulary")
}

fn sentence(rng: &mut ChaCha8Rng) -> String {
    let a = pick(rng, PEOPLE);
    let mut b = pick(rng, PEOPLE);
    while b == a {
        b = pick(rng, PEOPLE);
    }
    match rng.gen_range(0..3) {
        0 => format!("{a} {} {b} in {} on {}.", pick(rng, VERBS), pick(rng, PLACES), pick(rng, DAYS)),
        1 => format!("The {} of {} discussed {} with {a}.", pick(rng, ORGS), pick(rng, PLACES), pick(rng, TOPICS)),
        _ => format!("{a} said that {} would debate {} before {}.", pick(rng, ORGS), pick(rng, TOPICS), pick(rng, DAYS)),
    }
}

/// Articles dated one day apart from 2020-01-01, each paragraph 3 to 6 sentences.
pub fn synth_articles(cfg: &SynthConfig) -> Vec<ArticleRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let start = chrono::NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date");
    (0..cfg.articles)
        .map(|i| {
            let paragraphs = (0..cfg.paragraphs_per_article)
                .map(|_| {
                    let n = rng.gen_range(3..=6);
                    (0..n).map(|_| sentence(&mut rng)).collect::<Vec<_>>().join(" ")
                })
                .collect();
            let date = start + chrono::Days::new(i as u64);
            ArticleRecord {
                id: format!("art{i:04}"),
                headline: format!("{} news {i}", pick(&mut rng, PLACES)),
                date: date.format("%Y-%m-%d").to_string(),
                paragraphs,
            }
        })
        .collect()
}

pub fn synth_corpus(cfg: &SynthConfig) -> Result<Corpus> {
    let articles = synth_articles(cfg).into_iter().map(ArticleRecord::into_article).collect::<Result<Vec<_>>>()?;
    Ok(Corpus::from_articles(articles, FilterConfig::default()).0)
}

fn negate(s: &str) -> String {
    let mut words: Vec<&str> = s.split_whitespace().collect();
    let at = 1.min(words.len());
    words.insert(at, "did not");
    words.join(" ")
}

/// Claims over `corpus` in SUP/REF/NEI rotation: a copied sentence with its
/// paragraph as evidence, the same sentence negated, and an unrelated sentence.
pub fn synth_eval_claims(corpus: &Corpus, n: usize, seed: u64) -> Vec<EvalClaim> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let paragraphs: Vec<_> = corpus.paragraphs().collect();
    (0..n)
        .map(|i| {
            let label = Label::ALL[i % 3];
            let p = paragraphs[rng.gen_range(0..paragraphs.len())];
            let sentences = split_sentences(&p.text);
            let s = sentences[rng.gen_range(0..sentences.len())].trim_end_matches('.');
            let (claim, evidence) = match label {
                Label::Supports => (s.to_string(), vec![vec![p.paragraph_id.clone()]]),
                Label::Refutes => (negate(s), vec![vec![p.paragraph_id.clone()]]),
                Label::Nei => (
                    format!("The {} saw a {} near the {}", pick(&mut rng, NEI_WORDS), pick(&mut rng, NEI_WORDS), pick(&mut rng, NEI_WORDS)),
                    vec![],
                ),
            };
            EvalClaim { id: format!("q{i:05}"), claim, label, evidence }
        })
        .collect()
}

/// FEVER-shaped claims over wiki pages named `Page_<paragraph id>`, an alignment
/// from those pages to corpus paragraphs and the corpus as the target side.
/// Every seventh page has no alignment, so some evidence sets get pruned.
#[derive(Debug, Clone)]
pub struct FeverFixture {
    pub claims: Vec<serde_json::Value>,
    pub alignment_tsv: String,
    pub target: Vec<(String, String)>,
}

pub fn synth_fever(corpus: &Corpus, n: usize, seed: u64) -> FeverFixture {
    let eval = synth_eval_claims(corpus, n, seed);
    let claims = eval
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let evidence: Vec<Vec<serde_json::Value>> = if q.evidence.is_empty() {
                vec![vec![serde_json::json!([i, serde_json::Value::Null, serde_json::Value::Null, serde_json::Value::Null])]]
            } else {
                q.evidence
                    .iter()
                    .map(|set| set.iter().map(|p| serde_json::json!([i, i, format!("Page_{p}"), 0])).collect())
                    .collect()
            };
            serde_json::json!({"id": i, "claim": q.claim, "label": q.label, "evidence": evidence})
        })
        .collect();
    let mut alignment_tsv = String::new();
    for (i, p) in corpus.paragraphs().enumerate() {
        if i % 7 != 3 {
            alignment_tsv.push_str(&format!("Page_{}\t{}\n", p.paragraph_id, p.paragraph_id));
        }
    }
    let target = corpus.paragraphs().map(|p| (p.paragraph_id.clone(), p.text.clone())).collect();
    FeverFixture { claims, alignment_tsv, target }
}

/// Short labeled claims where "not" leans REF and "maybe" leans NEI, for cue analysis.
pub fn synth_cue_claims(n: usize, seed: u64) -> Vec<(String, Label)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = Label::ALL[i % 3];
            let mut words = vec![pick(&mut rng, PEOPLE).to_string(), pick(&mut rng, VERBS).to_string(), pick(&mut rng, PLACES).to_string()];
            match label {
                Label::Refutes if rng.gen_bool(0.8) => words.insert(1, "not".into()),
                Label::Nei if rng.gen_bool(0.5) => words.insert(0, "maybe".into()),
                _ if rng.gen_bool(0.1) => words.insert(1, "not".into()),
                _ => {}
            }
            (words.join(" "), label)
        })
        .collect()
}
