//! Operational shell around `urobot-core`: the `ingest`, `ask`, `bench` and
//! `serve` subcommands and the HTTP API used by the chat UI.
//!
//! Exit codes: 1 configuration or usage errors, 2 corpus/store/input data
//! errors, 3 model or embedding provider failures.

pub mod commands;
pub mod config;
pub mod server;

use thiserror::Error;
use urobot_core::bench::BenchError;
use urobot_core::corpus::CorpusError;
use urobot_core::embedding::EmbedError;
use urobot_core::ingest::IngestError;
use urobot_core::llm::GatewayError;
use urobot_core::rag::RagError;
use urobot_core::store::StoreError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("provider error: {0}")]
    Provider(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Provider(_) => 3,
        }
    }
}

impl From<EmbedError> for CliError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::InvalidSpec(_) => CliError::Config(e.to_string()),
            EmbedError::ProviderUnavailable { .. }
            | EmbedError::ProviderRejected(_)
            | EmbedError::DimensionMismatch { .. }
            | EmbedError::ZeroVector
            | EmbedError::NonFinite => CliError::Provider(e.to_string()),
            EmbedError::EmptyInput => CliError::Data(e.to_string()),
        }
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Config(_) | GatewayError::InvalidRequest(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Provider(e.to_string()),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Embedding(inner) => inner.into(),
            StoreError::InvalidK => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::ManifestNotFound(_) | CorpusError::InvalidConfig(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Corpus(inner) => inner.into(),
            IngestError::Embedding(inner) => inner.into(),
            IngestError::Store(inner) => inner.into(),
            IngestError::IncompatibleStore(_) => CliError::Config(e.to_string()),
        }
    }
}

impl From<RagError> for CliError {
    fn from(e: RagError) -> Self {
        match e {
            RagError::Gateway(inner) => inner.into(),
            RagError::Embedding(inner) => inner.into(),
            RagError::Store(inner) => inner.into(),
            RagError::NoContext => CliError::Data(e.to_string()),
            RagError::EmptyQuery | RagError::InvalidConfig(_) => CliError::Config(e.to_string()),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Rag(inner) => inner.into(),
            BenchError::Audit(_) => CliError::Data(e.to_string()),
            BenchError::UnknownReference(_)
            | BenchError::InvalidParameter(_)
            | BenchError::LabelMismatch(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}
