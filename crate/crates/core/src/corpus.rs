//! Paragraph-granular news corpus: ingestion, filtering and the on-disk store.
//!
//! Every article becomes a run of paragraphs; the headline (when present) is
//! paragraph 0. The store is a single sorted key-value file plus a sidecar
//! `stats.json`, so the same input stream always produces the same bytes.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::text::{normalize_whitespace, token_count};
use crate::types::{parse_timestamp, Timestamp};

pub const STORE_FILE: &str = "paragraphs.kv";
pub const STATS_FILE: &str = "stats.json";
pub const REJECTS_FILE: &str = "rejects.jsonl";

const STORE_MAGIC: &[u8; 8] = b"FCKVSTOR";
const STORE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub article_id: String,
    pub headline: String,
    pub published_at: Timestamp,
    pub body: Vec<String>,
}

/// One line of the ingest format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArticleRecord {
    pub id: String,
    #[serde(default)]
    pub headline: String,
    pub date: String,
    #[serde(default)]
    pub paragraphs: Vec<String>,
}

impl ArticleRecord {
    /// Paragraph entries are further split on blank lines.
    pub fn into_article(self) -> Result<Article> {
        if self.id.trim().is_empty() {
            return Err(Error::validation("empty article id"));
        }
        let published_at = parse_timestamp(&self.date)?;
        let mut body = Vec::new();
        for p in &self.paragraphs {
            let mut current = Vec::new();
            for line in p.lines() {
                if line.trim().is_empty() {
                    if !current.is_empty() {
                        body.push(current.join("\n"));
                        current.clear();
                    }
                } else {
                    current.push(line.trim());
                }
            }
            if !current.is_empty() {
                body.push(current.join("\n"));
            }
        }
        Ok(Article {
            article_id: self.id,
            headline: self.headline.trim().to_string(),
            published_at,
            body,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Paragraph {
    pub paragraph_id: String,
    pub article_id: String,
    pub rank: u32,
    pub text: String,
    pub published_at: Timestamp,
}

pub fn paragraph_id(article_id: &str, rank: u32) -> String {
    format!("{article_id}_{rank}")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Articles whose body has a larger share of digit/separator characters are dropped.
    pub max_digit_ratio: f64,
    pub drop_duplicates: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { max_digit_ratio: 0.5, drop_duplicates: true }
    }
}

/// Characters counted together with digits by the table-like filter.
pub const LIST_SEPARATORS: &[char] = &['|', ';', ',', '.', ':', '/', '-', '–', '+', '%', '(', ')'];

/// Share of digit or list-separator characters among non-whitespace body characters.
pub fn digit_separator_ratio(body: &[String]) -> f64 {
    let mut total = 0usize;
    let mut hits = 0usize;
    for c in body.iter().flat_map(|p| p.chars()).filter(|c| !c.is_whitespace()) {
        total += 1;
        if c.is_numeric() || LIST_SEPARATORS.contains(&c) {
            hits += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

fn content_digest(article: &Article) -> String {
    let mut h = Sha256::new();
    h.update(normalize_whitespace(&article.headline).as_bytes());
    for p in &article.body {
        h.update([0u8]);
        h.update(normalize_whitespace(p).as_bytes());
    }
    hex(&h.finalize())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RejectReason {
    Malformed { message: String },
    DuplicateId,
    Redundant { duplicate_of: String },
    TableLike { ratio: f64 },
    NoParagraphs,
}

impl RejectReason {
    pub fn key(&self) -> &'static str {
        match self {
            RejectReason::Malformed { .. } => "malformed",
            RejectReason::DuplicateId => "duplicate_id",
            RejectReason::Redundant { .. } => "redundant",
            RejectReason::TableLike { .. } => "table_like",
            RejectReason::NoParagraphs => "no_paragraphs",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based input line, when the article came from a stream.
    pub line: Option<usize>,
    pub article_id: Option<String>,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub records_read: usize,
    pub articles_kept: usize,
    pub paragraphs_kept: usize,
    pub rejections: Vec<Rejection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub articles: usize,
    pub paragraphs: usize,
    pub tokens: usize,
    pub mean_tokens_per_paragraph: f64,
    pub rejected: BTreeMap<String, usize>,
    /// SHA-256 of the key-value store file.
    pub store_digest: String,
}

/// Immutable paragraph store. Shareable across threads once built.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    paragraphs: BTreeMap<String, Paragraph>,
    by_article: BTreeMap<String, Vec<String>>,
    stats: CorpusStats,
    path: Option<PathBuf>,
}

/// Incremental single-writer builder applying the ingest filters.
pub struct CorpusBuilder {
    config: FilterConfig,
    seen_ids: HashSet<String>,
    seen_digests: BTreeMap<String, String>,
    articles: Vec<Article>,
    report: IngestReport,
}

impl CorpusBuilder {
    pub fn new(config: FilterConfig) -> Self {
        CorpusBuilder {
            config,
            seen_ids: HashSet::new(),
            seen_digests: BTreeMap::new(),
            articles: Vec::new(),
            report: IngestReport::default(),
        }
    }

    fn reject(&mut self, line: Option<usize>, article_id: Option<String>, reason: RejectReason) {
        self.report.rejections.push(Rejection { line, article_id, reason });
    }

    /// Parses and offers one ingest line. Malformed lines are recorded, never fatal.
    pub fn push_line(&mut self, line_no: usize, line: &str) {
        if line.trim().is_empty() {
            return;
        }
        self.report.records_read += 1;
        let parsed = serde_json::from_str::<ArticleRecord>(line)
            .map_err(Error::from)
            .and_then(ArticleRecord::into_article);
        match parsed {
            Ok(article) => self.offer(Some(line_no), article),
            Err(e) => self.reject(Some(line_no), None, RejectReason::Malformed { message: e.to_string() }),
        }
    }

    pub fn push_article(&mut self, article: Article) {
        self.report.records_read += 1;
        self.offer(None, article);
    }

    // Duplicate checks run before the threshold filter so that loosening the
    // threshold can only add articles.
    fn offer(&mut self, line: Option<usize>, article: Article) {
        let id = article.article_id.clone();
        if !self.seen_ids.insert(id.clone()) {
            self.reject(line, Some(id), RejectReason::DuplicateId);
            return;
        }
        if self.config.drop_duplicates {
            let digest = content_digest(&article);
            if let Some(first) = self.seen_digests.get(&digest) {
                let duplicate_of = first.clone();
                self.reject(line, Some(id), RejectReason::Redundant { duplicate_of });
                return;
            }
            self.seen_digests.insert(digest, id.clone());
        }
        let ratio = digit_separator_ratio(&article.body);
        if ratio > self.config.max_digit_ratio {
            self.reject(line, Some(id), RejectReason::TableLike { ratio });
            return;
        }
        if article.headline.is_empty() && article.body.iter().all(|p| p.trim().is_empty()) {
            self.reject(line, Some(id), RejectReason::NoParagraphs);
            return;
        }
        self.articles.push(article);
    }

    pub fn finish(mut self) -> (Corpus, IngestReport) {
        let mut corpus = Corpus::default();
        for article in self.articles.drain(..) {
            corpus.insert_article(&article);
        }
        self.report.articles_kept = corpus.by_article.len();
        self.report.paragraphs_kept = corpus.paragraphs.len();
        corpus.stats = corpus.compute_stats(&self.report);
        (corpus, self.report)
    }
}

impl Corpus {
    pub fn from_articles(articles: impl IntoIterator<Item = Article>, config: FilterConfig) -> (Corpus, IngestReport) {
        let mut b = CorpusBuilder::new(config);
        for a in articles {
            b.push_article(a);
        }
        b.finish()
    }

    /// Ingests a line-delimited article stream and persists it under `out_dir`.
    pub fn ingest<R: BufRead>(reader: R, config: FilterConfig, out_dir: &Path) -> Result<(Corpus, IngestReport)> {
        let mut b = CorpusBuilder::new(config);
        for (i, line) in reader.lines().enumerate() {
            b.push_line(i + 1, &line?);
        }
        let (mut corpus, report) = b.finish();
        corpus.save(out_dir, &report)?;
        Ok((corpus, report))
    }

    fn insert_article(&mut self, article: &Article) {
        let mut ids = Vec::new();
        let mut push = |rank: u32, text: &str, corpus: &mut Corpus| {
            let id = paragraph_id(&article.article_id, rank);
            corpus.paragraphs.insert(
                id.clone(),
                Paragraph {
                    paragraph_id: id.clone(),
                    article_id: article.article_id.clone(),
                    rank,
                    text: text.to_string(),
                    published_at: article.published_at,
                },
            );
            ids.push(id);
        };
        if !article.headline.is_empty() {
            push(0, &article.headline, self);
        }
        for (i, p) in article.body.iter().filter(|p| !p.trim().is_empty()).enumerate() {
            push(i as u32 + 1, p, self);
        }
        self.by_article.insert(article.article_id.clone(), ids);
    }

    fn compute_stats(&self, report: &IngestReport) -> CorpusStats {
        let tokens: usize = self.paragraphs.values().map(|p| token_count(&p.text)).sum();
        let mut rejected = BTreeMap::new();
        for r in &report.rejections {
            *rejected.entry(r.reason.key().to_string()).or_insert(0) += 1;
        }
        CorpusStats {
            articles: self.by_article.len(),
            paragraphs: self.paragraphs.len(),
            tokens,
            mean_tokens_per_paragraph: if self.paragraphs.is_empty() {
                0.0
            } else {
                tokens as f64 / self.paragraphs.len() as f64
            },
            rejected,
            store_digest: hex(&Sha256::digest(self.encode_store())),
        }
    }

    fn encode_store(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(STORE_MAGIC);
        buf.extend_from_slice(&STORE_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.paragraphs.len() as u64).to_le_bytes());
        for (key, p) in &self.paragraphs {
            let value = serde_json::to_vec(p).expect("paragraph serializes");
            buf.extend_from_slice(&(key.len() as u32).to_le_bytes());
            buf.extend_from_slice(key.as_bytes());
            buf.extend_from_slice(&(value.len() as u32).to_le_bytes());
            buf.extend_from_slice(&value);
        }
        buf
    }

    fn save(&mut self, dir: &Path, report: &IngestReport) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut f = fs::File::create(dir.join(STORE_FILE))?;
        f.write_all(&self.encode_store())?;
        f.sync_all()?;
        fs::write(dir.join(STATS_FILE), serde_json::to_vec_pretty(&self.stats)?)?;
        crate::jsonl::write(&dir.join(REJECTS_FILE), &report.rejections)?;
        self.path = Some(dir.to_path_buf());
        Ok(())
    }

    /// Opens a store written by [`Corpus::ingest`].
    pub fn open(dir: &Path) -> Result<Corpus> {
        let bytes = fs::read(dir.join(STORE_FILE))?;
        let bad = |m: &str| Error::Format(format!("{}: {m}", dir.join(STORE_FILE).display()));
        if bytes.len() < 20 || &bytes[..8] != STORE_MAGIC {
            return Err(bad("missing magic header"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != STORE_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let mut pos = 20usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated record"))?;
            pos += n;
            Ok(s)
        };
        let mut corpus = Corpus::default();
        for _ in 0..count {
            let klen = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let key = String::from_utf8(take(klen)?.to_vec()).map_err(|_| bad("non-utf8 key"))?;
            let vlen = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let p: Paragraph = serde_json::from_slice(take(vlen)?)?;
            if p.paragraph_id != key {
                return Err(bad("key does not match record"));
            }
            corpus.by_article.entry(p.article_id.clone()).or_default().push(key.clone());
            corpus.paragraphs.insert(key, p);
        }
        for ids in corpus.by_article.values_mut() {
            ids.sort_by_key(|id| corpus.paragraphs[id].rank);
        }
        corpus.stats = serde_json::from_slice(&fs::read(dir.join(STATS_FILE))?)?;
        corpus.path = Some(dir.to_path_buf());
        Ok(corpus)
    }

    pub fn get_paragraph(&self, id: &str) -> Result<&Paragraph> {
        self.paragraphs.get(id).ok_or_else(|| Error::not_found(format!("paragraph {id}")))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.paragraphs.contains_key(id)
    }

    /// All paragraphs of the article containing `id`, ascending rank.
    pub fn same_article_paragraphs(&self, id: &str) -> Result<Vec<&Paragraph>> {
        let p = self.get_paragraph(id)?;
        Ok(self.by_article[&p.article_id].iter().map(|i| &self.paragraphs[i]).collect())
    }

    pub fn article_paragraphs(&self, article_id: &str) -> Option<Vec<&Paragraph>> {
        self.by_article
            .get(article_id)
            .map(|ids| ids.iter().map(|i| &self.paragraphs[i]).collect())
    }

    /// Paragraphs in id order; this order defines document numbering in every index.
    pub fn paragraphs(&self) -> impl ExactSizeIterator<Item = &Paragraph> {
        self.paragraphs.values()
    }

    pub fn article_ids(&self) -> impl Iterator<Item = &str> {
        self.by_article.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.paragraphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paragraphs.is_empty()
    }

    pub fn stats(&self) -> &CorpusStats {
        &self.stats
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn article(id: &str, headline: &str, body: &[&str]) -> Article {
        Article {
            article_id: id.into(),
            headline: headline.into(),
            published_at: 1_600_000_000,
            body: body.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn headline_is_rank_zero() {
        let (c, _) = Corpus::from_articles([article("a", "Head", &["one", "two", "three"])], FilterConfig::default());
        assert_eq!(c.len(), 4);
        let ranks: Vec<u32> = c.same_article_paragraphs("a_2").unwrap().iter().map(|p| p.rank).collect();
        assert_eq!(ranks, vec![0, 1, 2, 3]);
        assert_eq!(c.get_paragraph("a_0").unwrap().text, "Head");
    }

    #[test]
    fn missing_headline_starts_at_rank_one() {
        let (c, _) = Corpus::from_articles([article("a", "", &["only"])], FilterConfig::default());
        assert!(matches!(c.get_paragraph("a_0"), Err(Error::NotFound(_))));
        assert_eq!(c.same_article_paragraphs("a_1").unwrap().len(), 1);
    }

    #[test]
    fn byte_identical_articles_are_redundant() {
        let (c, report) = Corpus::from_articles(
            [article("a", "Same", &["text  here"]), article("b", "Same", &["text here"])],
            FilterConfig::default(),
        );
        assert_eq!(c.article_ids().count(), 1);
        assert_eq!(report.rejections[0].reason, RejectReason::Redundant { duplicate_of: "a".into() });
    }

    #[test]
    fn malformed_lines_do_not_stop_ingest() {
        let input = "{\"id\":\"a\",\"headline\":\"H\",\"date\":\"2020-01-01\",\"paragraphs\":[\"x\"]}\nnot json\n{\"id\":\"b\",\"date\":\"nope\"}\n";
        let mut b = CorpusBuilder::new(FilterConfig::default());
        for (i, l) in input.lines().enumerate() {
            b.push_line(i + 1, l);
        }
        let (c, report) = b.finish();
        assert_eq!(c.len(), 2);
        assert_eq!(report.rejections.len(), 2);
        assert_eq!(report.rejections[0].line, Some(2));
    }

    #[test]
    fn blank_lines_split_paragraph_entries() {
        let rec = ArticleRecord {
            id: "x".into(),
            headline: "".into(),
            date: "2021-05-05".into(),
            paragraphs: vec!["first\n\nsecond".into(), "third".into()],
        };
        assert_eq!(rec.into_article().unwrap().body, vec!["first", "second", "third"]);
    }

    #[test]
    fn unwritable_store_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, b"x").unwrap();
        let r = Corpus::ingest("".as_bytes(), FilterConfig::default(), &blocker.join("sub"));
        assert!(matches!(r, Err(Error::Io(_))));
    }
}
