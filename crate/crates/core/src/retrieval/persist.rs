use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FCIX";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexKind {
    Tfidf,
    Bm25,
    Embedding,
}

impl IndexKind {
    fn tag(self) -> &'static [u8; 4] {
        match self {
            IndexKind::Tfidf => b"TFID",
            IndexKind::Bm25 => b"BM25",
            IndexKind::Embedding => b"EMBD",
        }
    }
}

/// Writes `MAGIC | kind tag | version (u32 LE) | bincode payload`.
pub fn save_index<T: Serialize>(path: &Path, kind: IndexKind, index: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(kind.tag())?;
    w.write_all(&VERSION.to_le_bytes())?;
    bincode::serialize_into(&mut w, index).map_err(|e| Error::Format(e.to_string()))?;
    w.flush()?;
    Ok(())
}

pub fn load_index<T: DeserializeOwned>(path: &Path, kind: IndexKind) -> Result<T> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; 12];
    r.read_exact(&mut header)
        .map_err(|_| Error::Format(format!("{}: truncated header", path.display())))?;
    if &header[..4] != MAGIC {
        return Err(Error::Format(format!("{}: not an index file", path.display())));
    }
    if &header[4..8] != kind.tag() {
        return Err(Error::Format(format!(
            "{}: expected {:?} index, found tag {:?}",
            path.display(),
            kind,
            String::from_utf8_lossy(&header[4..8])
        )));
    }
    let version = u32::from_le_bytes(header[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("{}: unsupported index version {version}", path.display())));
    }
    bincode::deserialize_from(r).map_err(|e| Error::Format(e.to_string()))
}

/// Sniffs the kind tag of an index file.
pub fn peek_kind(path: &Path) -> Result<IndexKind> {
    let mut header = [0u8; 8];
    File::open(path)?.read_exact(&mut header)?;
    if &header[..4] != MAGIC {
        return Err(Error::Format(format!("{}: not an index file", path.display())));
    }
    match &header[4..8] {
        b"TFID" => Ok(IndexKind::Tfidf),
        b"BM25" => Ok(IndexKind::Bm25),
        b"EMBD" => Ok(IndexKind::Embedding),
        other => Err(Error::Format(format!("unknown index tag {:?}", String::from_utf8_lossy(other)))),
    }
}
