//! Guideline corpus loading and chunking.
//!
//! A corpus is described by a JSON manifest listing structured documents.
//! Each document is a JSON file of pages, each page a list of blocks already
//! classified as `paragraph` or `table` by an upstream extraction step.

mod chunker;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::exec::Execution;

pub use chunker::{assign_chunk_ids, chunk_block, chunk_document, normalize_ws, ChunkerConfig};

pub const DEFAULT_TARGET_CHUNK_SIZE: usize = 1000;
pub const MIN_TARGET_CHUNK_SIZE: usize = 100;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus manifest not found: {0}")]
    ManifestNotFound(PathBuf),
    #[error("invalid corpus manifest {path}: {reason}")]
    ManifestInvalid { path: PathBuf, reason: String },
    #[error("document file not found: {0}")]
    DocumentNotFound(PathBuf),
    #[error("{}: {reason}", display_location(.path, *.line))]
    DocumentParseError {
        path: PathBuf,
        line: Option<usize>,
        reason: String,
    },
    #[error("duplicate doc_key {0:?} in corpus")]
    DuplicateDocKey(String),
    #[error("invalid chunker configuration: {0}")]
    InvalidConfig(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn display_location(path: &Path, line: Option<usize>) -> String {
    match line {
        Some(line) => format!("{}:{line}", path.display()),
        None => path.display().to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChunkKind {
    Paragraph,
    Table,
}

impl ChunkKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ChunkKind::Paragraph => "paragraph",
            ChunkKind::Table => "table",
        }
    }
}

/// One text block on one page, as classified by the extraction step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageBlock {
    pub page: u32,
    pub kind: ChunkKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidelineDocument {
    pub doc_key: String,
    pub title: String,
    /// Blocks in reading order; page numbers never decrease.
    pub blocks: Vec<PageBlock>,
}

/// The retrieval unit. `chunk_id` is what users see as the "Document ID".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: u64,
    pub doc_key: String,
    pub page: u32,
    pub kind: ChunkKind,
    pub text: String,
    pub char_count: usize,
}

impl Chunk {
    pub fn new(doc_key: &str, page: u32, kind: ChunkKind, text: String) -> Self {
        let char_count = text.chars().count();
        Chunk {
            chunk_id: 0,
            doc_key: doc_key.to_string(),
            page,
            kind,
            text,
            char_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub doc_key: String,
    pub title: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub corpus_id: String,
    #[serde(default = "default_target")]
    pub target_chunk_size: usize,
    #[serde(default)]
    pub chunk_overlap: usize,
    pub documents: Vec<ManifestEntry>,
}

fn default_target() -> usize {
    DEFAULT_TARGET_CHUNK_SIZE
}

/// A loaded corpus: manifest settings plus documents in manifest order.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub corpus_id: String,
    pub chunker: ChunkerConfig,
    pub documents: Vec<GuidelineDocument>,
}

impl Corpus {
    /// Chunks every document and assigns corpus-global ids.
    ///
    /// Documents are chunked independently (in parallel when allowed); ids
    /// are assigned afterwards in document order, so the result does not
    /// depend on `exec`.
    pub fn chunk(&self, exec: Execution) -> Vec<Chunk> {
        chunk_corpus(&self.documents, &self.chunker, exec)
    }
}

pub fn chunk_corpus(
    documents: &[GuidelineDocument],
    config: &ChunkerConfig,
    exec: Execution,
) -> Vec<Chunk> {
    let per_doc = exec.map(documents, |doc| chunk_document(doc, config));
    assign_chunk_ids(per_doc)
}

// On-disk document format.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DocumentFile {
    doc_key: String,
    title: String,
    pages: Vec<PageFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PageFile {
    page: u32,
    blocks: Vec<BlockFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockFile {
    kind: ChunkKind,
    text: String,
}

pub fn load_manifest(manifest_path: &Path) -> Result<CorpusManifest, CorpusError> {
    if !manifest_path.is_file() {
        return Err(CorpusError::ManifestNotFound(manifest_path.to_path_buf()));
    }
    let raw = fs::read_to_string(manifest_path).map_err(|source| CorpusError::Io {
        path: manifest_path.to_path_buf(),
        source,
    })?;
    let manifest: CorpusManifest =
        serde_json::from_str(&raw).map_err(|e| CorpusError::ManifestInvalid {
            path: manifest_path.to_path_buf(),
            reason: e.to_string(),
        })?;
    if manifest.target_chunk_size < MIN_TARGET_CHUNK_SIZE {
        return Err(CorpusError::ManifestInvalid {
            path: manifest_path.to_path_buf(),
            reason: format!(
                "target_chunk_size {} is below the minimum {MIN_TARGET_CHUNK_SIZE}",
                manifest.target_chunk_size
            ),
        });
    }
    Ok(manifest)
}

/// Loads the manifest and every document it lists, in manifest order.
pub fn load_corpus(manifest_path: &Path) -> Result<Corpus, CorpusError> {
    let manifest = load_manifest(manifest_path)?;
    let chunker =
        ChunkerConfig::new(manifest.target_chunk_size)?.with_overlap(manifest.chunk_overlap)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let mut seen = HashSet::new();
    for entry in &manifest.documents {
        if entry.doc_key.trim().is_empty() {
            return Err(CorpusError::ManifestInvalid {
                path: manifest_path.to_path_buf(),
                reason: "empty doc_key".into(),
            });
        }
        if !seen.insert(entry.doc_key.as_str()) {
            return Err(CorpusError::DuplicateDocKey(entry.doc_key.clone()));
        }
    }
    if manifest.documents.is_empty() {
        warn!(manifest = %manifest_path.display(), "corpus manifest lists no documents");
    }

    let documents = manifest
        .documents
        .iter()
        .map(|entry| {
            let path = if entry.path.is_absolute() {
                entry.path.clone()
            } else {
                base.join(&entry.path)
            };
            load_document(&path, entry)
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(Corpus {
        corpus_id: manifest.corpus_id,
        chunker,
        documents,
    })
}

fn load_document(path: &Path, entry: &ManifestEntry) -> Result<GuidelineDocument, CorpusError> {
    if !path.is_file() {
        return Err(CorpusError::DocumentNotFound(path.to_path_buf()));
    }
    let raw = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parse_err = |line: Option<usize>, reason: String| CorpusError::DocumentParseError {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let file: DocumentFile =
        serde_json::from_str(&raw).map_err(|e| parse_err(Some(e.line()), e.to_string()))?;

    if file.doc_key != entry.doc_key {
        return Err(parse_err(
            None,
            format!(
                "doc_key {:?} does not match manifest entry {:?}",
                file.doc_key, entry.doc_key
            ),
        ));
    }

    let mut blocks = Vec::new();
    let mut previous_page = 0u32;
    for (i, page) in file.pages.into_iter().enumerate() {
        if page.page == 0 {
            return Err(parse_err(
                None,
                format!("pages[{i}]: page numbers start at 1"),
            ));
        }
        if page.page <= previous_page {
            return Err(parse_err(
                None,
                format!(
                    "pages[{i}]: page {} is not after page {previous_page}",
                    page.page
                ),
            ));
        }
        previous_page = page.page;
        for block in page.blocks {
            if normalize_ws(&block.text).is_empty() {
                continue;
            }
            blocks.push(PageBlock {
                page: page.page,
                kind: block.kind,
                text: block.text,
            });
        }
    }

    Ok(GuidelineDocument {
        doc_key: file.doc_key,
        title: if file.title.is_empty() {
            entry.title.clone()
        } else {
            file.title
        },
        blocks,
    })
}
