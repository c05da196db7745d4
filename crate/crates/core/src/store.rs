//! Embedded vector store with exact top-k cosine search.
//!
//! On-disk layout (one directory):
//!
//! - `manifest.json`: corpus id, embedder spec, dim, count, format version and
//!   SHA-256 checksums of the two payload files.
//! - `chunks.jsonl`: one [`Chunk`] per line, ascending `chunk_id`.
//! - `vectors.bin`: `count * dim` little-endian `f64`, same order.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{debug, info};

use crate::corpus::{Chunk, ChunkKind};
use crate::embedding::{cosine, EmbedError, EmbedderSpec, Vector};
use crate::exec::Execution;

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_K: usize = 10;

const MANIFEST_FILE: &str = "manifest.json";
const CHUNKS_FILE: &str = "chunks.jsonl";
const VECTORS_FILE: &str = "vectors.bin";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("dimension mismatch: store has dim {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("chunk_id {0} appears more than once in the batch")]
    DuplicateIdInBatch(u64),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("unsupported store format version {found} (supported: {FORMAT_VERSION})")]
    FormatVersionUnsupported { found: u32 },
    #[error("corrupt store at {path}: {reason}")]
    CorruptStore { path: PathBuf, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Embedding(#[from] EmbedError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorRecord {
    pub chunk: Chunk,
    pub vector: Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hit {
    pub chunk_id: u64,
    pub score: f64,
    pub chunk: Chunk,
}

/// Restricts a search to some documents and/or one block kind.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_keys: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ChunkKind>,
}

impl ChunkFilter {
    pub fn matches(&self, doc_key: &str, kind: ChunkKind) -> bool {
        self.doc_keys
            .as_ref()
            .is_none_or(|keys| keys.contains(doc_key))
            && self.kind.is_none_or(|k| k == kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentEntry {
    pub doc_key: String,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub format_version: u32,
    pub corpus_id: String,
    pub embedder: EmbedderSpec,
    pub dim: usize,
    pub count: usize,
    #[serde(default)]
    pub documents: Vec<DocumentEntry>,
    pub checksums: Checksums,
    pub created_unix: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checksums {
    pub chunks_sha256: String,
    pub vectors_sha256: String,
}

/// Records kept sorted by `chunk_id`. Search is a full scan, so results are
/// exact. Reads take `&self` and may run concurrently; writes need `&mut`.
#[derive(Debug)]
pub struct VectorStore {
    corpus_id: String,
    embedder: EmbedderSpec,
    documents: Vec<DocumentEntry>,
    records: Vec<VectorRecord>,
    execution: Execution,
    reads: AtomicU64,
}

impl Clone for VectorStore {
    fn clone(&self) -> Self {
        VectorStore {
            corpus_id: self.corpus_id.clone(),
            embedder: self.embedder.clone(),
            documents: self.documents.clone(),
            records: self.records.clone(),
            execution: self.execution,
            reads: AtomicU64::new(0),
        }
    }
}

impl VectorStore {
    pub fn new(corpus_id: &str, embedder: EmbedderSpec) -> Self {
        VectorStore {
            corpus_id: corpus_id.to_string(),
            embedder,
            documents: Vec::new(),
            records: Vec::new(),
            execution: Execution::default(),
            reads: AtomicU64::new(0),
        }
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn set_execution(&mut self, execution: Execution) {
        self.execution = execution;
    }

    pub fn set_documents(&mut self, documents: Vec<DocumentEntry>) {
        self.documents = documents;
    }

    pub fn documents(&self) -> &[DocumentEntry] {
        &self.documents
    }

    pub fn corpus_id(&self) -> &str {
        &self.corpus_id
    }

    pub fn embedder(&self) -> &EmbedderSpec {
        &self.embedder
    }

    pub fn dim(&self) -> usize {
        self.embedder.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[VectorRecord] {
        &self.records
    }

    pub fn get(&self, chunk_id: u64) -> Option<&VectorRecord> {
        self.records
            .binary_search_by_key(&chunk_id, |r| r.chunk.chunk_id)
            .ok()
            .map(|i| &self.records[i])
    }

    /// Number of searches served so far.
    pub fn read_count(&self) -> u64 {
        self.reads.load(AtomicOrdering::Relaxed)
    }

    /// Inserts or replaces records by `chunk_id`; returns the new record count.
    pub fn upsert(&mut self, records: Vec<VectorRecord>) -> Result<usize, StoreError> {
        let mut seen = BTreeSet::new();
        for r in &records {
            if r.vector.dim() != self.dim() {
                return Err(StoreError::DimensionMismatch {
                    expected: self.dim(),
                    actual: r.vector.dim(),
                });
            }
            if !seen.insert(r.chunk.chunk_id) {
                return Err(StoreError::DuplicateIdInBatch(r.chunk.chunk_id));
            }
        }
        for record in records {
            match self
                .records
                .binary_search_by_key(&record.chunk.chunk_id, |r| r.chunk.chunk_id)
            {
                Ok(i) => self.records[i] = record,
                Err(i) => self.records.insert(i, record),
            }
        }
        Ok(self.records.len())
    }

    /// Exact top-k by cosine similarity, ties broken by ascending `chunk_id`.
    pub fn search(
        &self,
        query: &Vector,
        k: usize,
        filter: Option<&ChunkFilter>,
    ) -> Result<Vec<Hit>, StoreError> {
        if k == 0 {
            return Err(StoreError::InvalidK);
        }
        if query.dim() != self.dim() {
            return Err(StoreError::DimensionMismatch {
                expected: self.dim(),
                actual: query.dim(),
            });
        }
        self.reads.fetch_add(1, AtomicOrdering::Relaxed);
        if self.records.is_empty() {
            debug!(corpus = %self.corpus_id, "search on empty store");
            return Ok(Vec::new());
        }

        let scored: Vec<Option<(usize, f64)>> =
            self.execution.map_indexed(&self.records, |i, r| {
                if filter.is_some_and(|f| !f.matches(&r.chunk.doc_key, r.chunk.kind)) {
                    return None;
                }
                // Dimensions were checked above and vectors are unit length.
                cosine(query, &r.vector).ok().map(|s| (i, s))
            });
        let mut scored: Vec<(usize, f64)> = scored.into_iter().flatten().collect();

        // Records are in id order, so the index doubles as the id tie-breaker.
        let by_rank = |a: &(usize, f64), b: &(usize, f64)| -> Ordering {
            b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
        };
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, by_rank);
            scored.truncate(k);
        }
        scored.sort_unstable_by(by_rank);

        Ok(scored
            .into_iter()
            .map(|(i, score)| {
                let chunk = self.records[i].chunk.clone();
                Hit {
                    chunk_id: chunk.chunk_id,
                    score,
                    chunk,
                }
            })
            .collect())
    }

    pub fn manifest(&self) -> StoreManifest {
        let (chunks, vectors) = self.payload();
        StoreManifest {
            format_version: FORMAT_VERSION,
            corpus_id: self.corpus_id.clone(),
            embedder: self.embedder.clone(),
            dim: self.dim(),
            count: self.records.len(),
            documents: self.documents.clone(),
            checksums: Checksums {
                chunks_sha256: sha256_hex(&chunks),
                vectors_sha256: sha256_hex(&vectors),
            },
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    fn payload(&self) -> (Vec<u8>, Vec<u8>) {
        let mut chunks = Vec::new();
        let mut vectors = Vec::with_capacity(self.records.len() * self.dim() * 8);
        for r in &self.records {
            serde_json::to_writer(&mut chunks, &r.chunk).expect("chunk serializes");
            chunks.push(b'\n');
            for v in r.vector.values() {
                vectors.extend_from_slice(&v.to_le_bytes());
            }
        }
        (chunks, vectors)
    }

    pub fn save(&self, dir: &Path) -> Result<StoreManifest, StoreError> {
        fs::create_dir_all(dir).map_err(|source| io_err(dir, source))?;
        let (chunks, vectors) = self.payload();
        let mut manifest = self.manifest();
        manifest.checksums = Checksums {
            chunks_sha256: sha256_hex(&chunks),
            vectors_sha256: sha256_hex(&vectors),
        };
        write_file(&dir.join(CHUNKS_FILE), &chunks)?;
        write_file(&dir.join(VECTORS_FILE), &vectors)?;
        let manifest_bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        write_file(&dir.join(MANIFEST_FILE), &manifest_bytes)?;
        info!(path = %dir.display(), count = manifest.count, "saved vector store");
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<Self, StoreError> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let raw = read_file(&manifest_path)?;
        let manifest: StoreManifest =
            serde_json::from_slice(&raw).map_err(|e| corrupt(&manifest_path, e))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(StoreError::FormatVersionUnsupported {
                found: manifest.format_version,
            });
        }
        if manifest.dim != manifest.embedder.dim || manifest.dim == 0 {
            return Err(corrupt(
                &manifest_path,
                "manifest dim disagrees with embedder dim",
            ));
        }

        let chunks_path = dir.join(CHUNKS_FILE);
        let vectors_path = dir.join(VECTORS_FILE);
        let chunks_raw = read_file(&chunks_path)?;
        let vectors_raw = read_file(&vectors_path)?;
        if sha256_hex(&chunks_raw) != manifest.checksums.chunks_sha256 {
            return Err(corrupt(&chunks_path, "checksum mismatch"));
        }
        if sha256_hex(&vectors_raw) != manifest.checksums.vectors_sha256 {
            return Err(corrupt(&vectors_path, "checksum mismatch"));
        }

        let chunks: Vec<Chunk> = chunks_raw
            .split(|b| *b == b'\n')
            .filter(|line| !line.is_empty())
            .enumerate()
            .map(|(i, line)| {
                serde_json::from_slice(line)
                    .map_err(|e| corrupt(&chunks_path, format!("line {}: {e}", i + 1)))
            })
            .collect::<Result<_, _>>()?;
        if chunks.len() != manifest.count {
            return Err(corrupt(
                &chunks_path,
                format!(
                    "manifest declares {} records, found {}",
                    manifest.count,
                    chunks.len()
                ),
            ));
        }
        if vectors_raw.len() != manifest.count * manifest.dim * 8 {
            return Err(corrupt(
                &vectors_path,
                format!(
                    "expected {} bytes for {} x {} f64, found {}",
                    manifest.count * manifest.dim * 8,
                    manifest.count,
                    manifest.dim,
                    vectors_raw.len()
                ),
            ));
        }
        if chunks.windows(2).any(|w| w[0].chunk_id >= w[1].chunk_id) {
            return Err(corrupt(
                &chunks_path,
                "chunks not in ascending chunk_id order",
            ));
        }

        let records = chunks
            .into_iter()
            .zip(vectors_raw.chunks_exact(manifest.dim * 8))
            .map(|(chunk, bytes)| {
                let values = bytes
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                    .collect();
                Vector::from_normalized(values)
                    .map(|vector| VectorRecord { chunk, vector })
                    .map_err(|e| corrupt(&vectors_path, e))
            })
            .collect::<Result<Vec<_>, _>>()?;

        Ok(VectorStore {
            corpus_id: manifest.corpus_id,
            embedder: manifest.embedder,
            documents: manifest.documents,
            records,
            execution: Execution::default(),
            reads: AtomicU64::new(0),
        })
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn corrupt(path: &Path, reason: impl ToString) -> StoreError {
    StoreError::CorruptStore {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> StoreError {
    StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, StoreError> {
    fs::read(path).map_err(|source| io_err(path, source))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    fs::write(path, bytes).map_err(|source| io_err(path, source))
}
