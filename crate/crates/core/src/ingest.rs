//! Corpus ingestion: load, chunk, embed and upsert into a vector store.

use std::path::Path;

use serde::Serialize;
use thiserror::Error;
use tracing::info;

use crate::corpus::{load_corpus, Corpus, CorpusError};
use crate::embedding::{EmbedError, Embedder};
use crate::exec::Execution;
use crate::store::{DocumentEntry, StoreError, VectorRecord, VectorStore};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Embedding(#[from] EmbedError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("existing store is incompatible: {0}")]
    IncompatibleStore(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IngestSummary {
    pub documents: usize,
    pub chunks: usize,
    pub dim: usize,
}

impl std::fmt::Display for IngestSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "documents: {}, chunks: {}, dim: {}",
            self.documents, self.chunks, self.dim
        )
    }
}

/// Chunks `corpus`, embeds every chunk and upserts the records into `store`
/// (a fresh one when `None`). Re-ingesting replaces records by `chunk_id`.
///
/// Embedding batches of `spec.batch_size` texts are issued in parallel when
/// `exec` allows; record order is always chunk order.
pub fn ingest(
    corpus: &Corpus,
    embedder: &dyn Embedder,
    store: Option<VectorStore>,
    exec: Execution,
) -> Result<(VectorStore, IngestSummary), IngestError> {
    let spec = embedder.spec().clone();
    let mut store = match store {
        None => VectorStore::new(&corpus.corpus_id, spec.clone()),
        Some(existing) => {
            if existing.corpus_id() != corpus.corpus_id {
                return Err(IngestError::IncompatibleStore(format!(
                    "store holds corpus {:?}, manifest declares {:?}",
                    existing.corpus_id(),
                    corpus.corpus_id
                )));
            }
            if existing.embedder() != &spec {
                return Err(IngestError::IncompatibleStore(
                    "embedder spec differs from the store's".into(),
                ));
            }
            existing
        }
    };

    let chunks = corpus.chunk(exec);
    let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
    let batches: Vec<&[&str]> = texts.chunks(spec.batch_size.max(1)).collect();
    let vectors = exec
        .map(&batches, |batch| embedder.embed_batch(batch))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten();
    let records: Vec<VectorRecord> = chunks
        .into_iter()
        .zip(vectors)
        .map(|(chunk, vector)| VectorRecord { chunk, vector })
        .collect();
    let chunk_count = records.len();

    store.set_documents(
        corpus
            .documents
            .iter()
            .map(|d| DocumentEntry {
                doc_key: d.doc_key.clone(),
                title: d.title.clone(),
            })
            .collect(),
    );
    store.upsert(records)?;
    let summary = IngestSummary {
        documents: corpus.documents.len(),
        chunks: chunk_count,
        dim: spec.dim,
    };
    info!(corpus = %corpus.corpus_id, %summary, "ingested corpus");
    Ok((store, summary))
}

/// [`ingest`] from a manifest file, reusing the store at `store_dir` when one
/// exists there, then saving the result to `store_dir`.
pub fn ingest_to_dir(
    manifest_path: &Path,
    store_dir: &Path,
    embedder: &dyn Embedder,
    exec: Execution,
) -> Result<IngestSummary, IngestError> {
    let corpus = load_corpus(manifest_path)?;
    let existing = if store_dir.join("manifest.json").is_file() {
        Some(VectorStore::load(store_dir)?)
    } else {
        None
    };
    let (store, summary) = ingest(&corpus, embedder, existing, exec)?;
    store.save(store_dir)?;
    Ok(summary)
}
