//! Guideline-grounded retrieval question answering and a multi-run
//! multiple-choice benchmark harness.
//!
//! The crate is organised along the data flow:
//!
//! - [`corpus`]: load structured guideline documents and cut them into
//!   metadata-tagged chunks.
//! - [`embedding`]: turn text into unit vectors (HTTP provider or an offline
//!   hashing stub) and cosine similarity.
//! - [`store`]: an embedded vector store with exact top-k search and a
//!   checksummed on-disk layout.
//! - [`llm`]: chat-completion backends (OpenAI-compatible HTTP client plus
//!   deterministic mocks).
//! - [`rag`]: the retrieval-augmented answering pipeline, prompts, answer
//!   parsing and citation extraction.
//! - [`ingest`]: corpus to persisted store in one call.
//! - [`bench`]: repeated-run benchmarking, correctness matrices and the
//!   statistics reported over them.
//!
//! Data-parallel inner loops (store scans, per-document chunking, per-question
//! benchmark evaluation) run on rayon when the `parallel` feature is enabled and
//! fall back to plain iterators otherwise; see [`exec`].

pub mod bench;
pub mod corpus;
pub mod embedding;
pub mod exec;
mod http;
pub mod ingest;
pub mod llm;
pub mod mcq;
pub mod rag;
pub mod retry;
pub mod store;

pub use exec::Execution;
