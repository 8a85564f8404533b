use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DictPart, Dictionary};
use crate::corpus::Corpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScopeOrigin {
    Source,
    Dictionary { query: String, part: DictPart, provenance: String },
    Augmentation { via: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScopeEntry {
    pub paragraph_id: String,
    pub origin: ScopeOrigin,
}

/// Paragraphs an annotator may consult: the source first, the rest shuffled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeScope {
    pub entries: Vec<ScopeEntry>,
    pub seed: u64,
}

/// `{p} ∪ d_1 ∪ ... ∪ d_n` with `p` first and the remainder shuffled by `seed`.
pub fn assemble_scope(corpus: &Corpus, source_id: &str, dictionaries: &[&Dictionary], seed: u64) -> Result<KnowledgeScope> {
    corpus.get_paragraph(source_id)?;
    let mut seen: HashSet<&str> = HashSet::from([source_id]);
    let mut rest = Vec::new();
    for d in dictionaries {
        for e in d.entries() {
            if seen.insert(e.paragraph_id.as_str()) {
                rest.push(ScopeEntry {
                    paragraph_id: e.paragraph_id.clone(),
                    origin: ScopeOrigin::Dictionary {
                        query: d.query.clone(),
                        part: e.part,
                        provenance: e.provenance.clone(),
                    },
                });
            }
        }
    }
    rest.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut entries = Vec::with_capacity(rest.len() + 1);
    entries.push(ScopeEntry { paragraph_id: source_id.to_string(), origin: ScopeOrigin::Source });
    entries.extend(rest);
    Ok(KnowledgeScope { entries, seed })
}

impl KnowledgeScope {
    pub fn source(&self) -> &str {
        &self.entries[0].paragraph_id
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.paragraph_id.as_str())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.ids().any(|i| i == id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds a paragraph from the same article as an existing member.
    pub fn augment(&mut self, corpus: &Corpus, paragraph_id: &str) -> Result<()> {
        if self.contains(paragraph_id) {
            return Ok(());
        }
        let article = &corpus.get_paragraph(paragraph_id)?.article_id;
        let via = self
            .ids()
            .find(|m| corpus.get_paragraph(m).is_ok_and(|p| &p.article_id == article))
            .map(str::to_string)
            .ok_or_else(|| Error::validation(format!("{paragraph_id} shares no article with the scope")))?;
        self.entries.push(ScopeEntry { paragraph_id: paragraph_id.to_string(), origin: ScopeOrigin::Augmentation { via } });
        Ok(())
    }

    /// Members plus every paragraph of an article that some member belongs to.
    pub fn allowed_evidence(&self, corpus: &Corpus) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for id in self.ids() {
            match corpus.same_article_paragraphs(id) {
                Ok(ps) => out.extend(ps.into_iter().map(|p| p.paragraph_id.clone())),
                Err(_) => {
                    out.insert(id.to_string());
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Article, FilterConfig};
    use crate::dictionary::DictEntry;

    fn corpus() -> Corpus {
        let arts = (0..4).map(|i| Article {
            article_id: format!("a{i}"),
            headline: format!("Headline {i}"),
            published_at: i,
            body: vec![format!("body {i} one"), format!("body {i} two")],
        });
        Corpus::from_articles(arts, FilterConfig::default()).0
    }

    fn dict(q: &str, ids: &[&str]) -> Dictionary {
        Dictionary {
            query: q.into(),
            timestamp: 0,
            keyword: ids
                .iter()
                .map(|i| DictEntry { paragraph_id: i.to_string(), part: DictPart::Keyword, score: 1.0, provenance: q.into() })
                .collect(),
            semantic: vec![],
        }
    }

    #[test]
    fn no_dictionaries_is_just_the_source() {
        let s = assemble_scope(&corpus(), "a0_1", &[], 3).unwrap();
        assert_eq!(s.ids().collect::<Vec<_>>(), vec!["a0_1"]);
    }

    #[test]
    fn shared_entries_deduplicated_and_seeded() {
        let c = corpus();
        let (dp, dm) = (dict("p", &["a1_0", "a2_1", "a0_1"]), dict("m", &["a2_1", "a3_2"]));
        let s1 = assemble_scope(&c, "a0_1", &[&dp, &dm], 42).unwrap();
        let s2 = assemble_scope(&c, "a0_1", &[&dp, &dm], 42).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(s1.source(), "a0_1");
        assert_eq!(s1.len(), 4);
    }

    #[test]
    fn unknown_source() {
        assert!(matches!(assemble_scope(&corpus(), "zz", &[], 0), Err(Error::NotFound(_))));
    }

    #[test]
    fn augmentation_requires_shared_article() {
        let c = corpus();
        let mut s = assemble_scope(&c, "a0_1", &[], 0).unwrap();
        s.augment(&c, "a0_2").unwrap();
        assert!(s.augment(&c, "a1_1").is_err());
        assert_eq!(s.allowed_evidence(&c).len(), 3);
    }
}
