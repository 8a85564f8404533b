use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use factcheck_core::config::{Provenance, RunConfig};
use factcheck_core::corpus::Corpus;
use factcheck_core::retrieval::{
    load_index, peek_kind, Bm25Index, EmbeddingIndex, Embedder, HashingEmbedder, IndexKind, Retriever, SemanticRetriever,
    TfidfIndex,
};
use serde::Serialize;

/// An error caused by how the tool was invoked rather than by its inputs.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

pub struct Ctx {
    pub config: RunConfig,
    pub argv: Vec<String>,
}

impl Ctx {
    /// Validates the config after command flags have been applied to it.
    pub fn validated(&self) -> Result<()> {
        self.config.validate().map_err(|e| usage(e.to_string()))
    }

    pub fn corpus_dir(&self, flag: Option<PathBuf>) -> Result<PathBuf> {
        flag.or_else(|| self.config.paths.corpus.clone())
            .ok_or_else(|| usage("no corpus: pass --corpus or set paths.corpus in the config"))
    }

    pub fn open_corpus(&self, flag: Option<PathBuf>) -> Result<(Corpus, PathBuf)> {
        let dir = self.corpus_dir(flag)?;
        let corpus = Corpus::open(&dir).with_context(|| format!("opening corpus {}", dir.display()))?;
        Ok((corpus, dir))
    }

    /// Writes `<artifact>.provenance.json`, or `provenance.json` inside a directory artifact.
    pub fn sidecar(&self, artifact: &Path, inputs: &[&Path]) -> Result<()> {
        let prov = Provenance::new(self.argv.clone(), self.config.clone(), inputs)?;
        let path = if artifact.is_dir() {
            artifact.join("provenance.json")
        } else {
            let mut name = artifact.file_name().unwrap_or_default().to_os_string();
            name.push(".provenance.json");
            artifact.with_file_name(name)
        };
        write_bytes(&path, format!("{}\n", serde_json::to_string_pretty(&prov)?).as_bytes())
    }

    pub fn write_json<T: Serialize>(&self, path: &Path, value: &T, inputs: &[&Path]) -> Result<()> {
        write_bytes(path, format!("{}\n", serde_json::to_string_pretty(value)?).as_bytes())?;
        self.sidecar(path, inputs)
    }

    pub fn write_jsonl<T: Serialize>(&self, path: &Path, records: &[T], inputs: &[&Path]) -> Result<()> {
        write_bytes(path, factcheck_core::jsonl::to_string(records)?.as_bytes())?;
        self.sidecar(path, inputs)
    }

    pub fn write_text(&self, path: &Path, text: &str, inputs: &[&Path]) -> Result<()> {
        write_bytes(path, text.as_bytes())?;
        self.sidecar(path, inputs)
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(bytes)?;
    Ok(())
}

pub fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    let mut out = std::io::stdout().lock();
    // A closed pipe (e.g. `| head`) is not an error for a read-only command.
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Any index file, with the embedder that matches it.
pub enum LoadedIndex {
    Tfidf(TfidfIndex),
    Bm25(Bm25Index),
    Embedding(EmbeddingIndex, HashingEmbedder),
}

impl LoadedIndex {
    pub fn load(path: &Path) -> Result<LoadedIndex> {
        let kind = peek_kind(path).with_context(|| format!("reading index {}", path.display()))?;
        Ok(match kind {
            IndexKind::Tfidf => LoadedIndex::Tfidf(load_index(path, kind)?),
            IndexKind::Bm25 => LoadedIndex::Bm25(load_index(path, kind)?),
            IndexKind::Embedding => {
                let index: EmbeddingIndex = load_index(path, kind)?;
                let embedder = HashingEmbedder::new(index.dim());
                if embedder.tag() != index.embedder_tag() {
                    anyhow::bail!("index {} was built by embedder {:?}, which is not available", path.display(), index.embedder_tag());
                }
                LoadedIndex::Embedding(index, embedder)
            }
        })
    }

    pub fn retriever(&self) -> Box<dyn Retriever + '_> {
        match self {
            LoadedIndex::Tfidf(i) => Box::new(Borrowed(i)),
            LoadedIndex::Bm25(i) => Box::new(Borrowed(i)),
            LoadedIndex::Embedding(index, embedder) => Box::new(SemanticRetriever { index, embedder }),
        }
    }
}

struct Borrowed<'a, R>(&'a R);

impl<R: Retriever> Retriever for Borrowed<'_, R> {
    fn retrieve(&self, query: &str, k: usize) -> factcheck_core::Result<factcheck_core::retrieval::Ranking> {
        self.0.retrieve(query, k)
    }
}

/// Parses a comma-separated list such as `1,5,10`.
pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<T>().map_err(|_| usage(format!("bad list item {x:?}"))))
        .collect()
}

/// `(id, text, evidence sets)`.
pub type QueryRecord = (String, String, Vec<Vec<String>>);

/// Reads JSONL records with `id` (string or number), `claim` and optional
/// `evidence` of paragraph ids.
pub fn read_queries(path: &Path) -> Result<Vec<QueryRecord>> {
    let mut out = Vec::new();
    for (n, line) in read_text(path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(line).with_context(|| format!("{}:{}", path.display(), n + 1))?;
        let id = match &v["id"] {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(x) => x.to_string(),
            _ => anyhow::bail!("{}:{}: missing id", path.display(), n + 1),
        };
        let claim = v["claim"].as_str().with_context(|| format!("{}:{}: missing claim", path.display(), n + 1))?.to_string();
        let evidence: Vec<Vec<String>> = match v.get("evidence") {
            Some(e) => serde_json::from_value(e.clone()).unwrap_or_default(),
            None => Vec::new(),
        };
        out.push((id, claim, evidence));
    }
    Ok(out)
}
