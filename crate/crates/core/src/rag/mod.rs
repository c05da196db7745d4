//! Retrieval-augmented answering: embed the query, fetch the top-k chunks,
//! build the system prompt, call the model and post-process its reply.

mod parse;
mod prompt;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::embedding::{EmbedError, Embedder, EmbedderSpec};
use crate::llm::{
    chat_complete, BackendSpec, ChatBackend, ChatMessage, ChatRequest, GatewayError,
    DEFAULT_TEMPERATURE,
};
use crate::mcq::{Letter, McqQuestion};
use crate::store::{Hit, StoreError, VectorStore, DEFAULT_K};

pub use parse::{cited_ids, parse_answer_letter};
pub use prompt::{
    build_chat_system_prompt, build_system_prompt, context_block, BASELINE_EXAM_PROMPT,
    RAG_CHAT_TEMPLATE, RAG_EXAM_TEMPLATE,
};

pub const SNIPPET_CHARS: usize = 400;
pub const FALLBACK_CITATIONS: usize = 3;

#[derive(Debug, Error)]
pub enum RagError {
    #[error("retrieval returned no context")]
    NoContext,
    #[error("query is empty")]
    EmptyQuery,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Embedding(#[from] EmbedError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    #[default]
    Rag,
    Baseline,
}

fn default_k() -> usize {
    DEFAULT_K
}

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RagConfig {
    pub model_id: String,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub prompt_mode: PromptMode,
    pub embedder: EmbedderSpec,
    pub backend: BackendSpec,
}

impl RagConfig {
    pub fn new(
        model_id: &str,
        prompt_mode: PromptMode,
        embedder: EmbedderSpec,
        backend: BackendSpec,
    ) -> Self {
        RagConfig {
            model_id: model_id.to_string(),
            k: DEFAULT_K,
            temperature: DEFAULT_TEMPERATURE,
            prompt_mode,
            embedder,
            backend,
        }
    }

    pub fn validate(&self) -> Result<(), RagError> {
        if self.k == 0 {
            return Err(RagError::InvalidConfig("k must be at least 1".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(RagError::InvalidConfig(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.model_id.trim().is_empty() {
            return Err(RagError::InvalidConfig("model_id is empty".into()));
        }
        self.embedder.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McqAnswer {
    /// `None` means the completion could not be parsed (INVALID).
    pub letter: Option<Letter>,
    pub raw_completion: String,
    pub retrieved_ids: Vec<u64>,
    /// Set when the backend call failed non-fatally.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Citation {
    pub chunk_id: u64,
    pub doc_key: String,
    pub page: u32,
    pub snippet: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatAnswer {
    pub answer_text: String,
    pub citations: Vec<Citation>,
    pub retrieved: Vec<Hit>,
    /// True when the completion cited nothing usable and the top hits were used.
    pub citations_fallback: bool,
}

/// First `SNIPPET_CHARS` characters of the chunk text.
pub fn snippet(text: &str) -> String {
    text.chars().take(SNIPPET_CHARS).collect()
}

fn citation(hit: &Hit) -> Citation {
    Citation {
        chunk_id: hit.chunk_id,
        doc_key: hit.chunk.doc_key.clone(),
        page: hit.chunk.page,
        snippet: snippet(&hit.chunk.text),
        score: hit.score,
    }
}

/// Immutable after construction; `answer_*` may be called concurrently.
pub struct RagEngine {
    model_id: String,
    k: usize,
    temperature: f64,
    prompt_mode: PromptMode,
    embedder: Arc<dyn Embedder>,
    backend: Arc<dyn ChatBackend>,
    store: Option<Arc<VectorStore>>,
}

impl std::fmt::Debug for RagEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RagEngine")
            .field("model_id", &self.model_id)
            .field("k", &self.k)
            .field("prompt_mode", &self.prompt_mode)
            .finish_non_exhaustive()
    }
}

impl RagEngine {
    /// Builds the embedder and backend described by `cfg`.
    pub fn from_config(cfg: &RagConfig, store: Option<Arc<VectorStore>>) -> Result<Self, RagError> {
        cfg.validate()?;
        let embedder = cfg.embedder.build()?;
        let backend = cfg.backend.build()?;
        Self::new(cfg, embedder, backend, store)
    }

    pub fn new(
        cfg: &RagConfig,
        embedder: Arc<dyn Embedder>,
        backend: Arc<dyn ChatBackend>,
        store: Option<Arc<VectorStore>>,
    ) -> Result<Self, RagError> {
        cfg.validate()?;
        if let Some(store) = &store {
            if !store.is_empty() && store.dim() != embedder.spec().dim {
                return Err(RagError::InvalidConfig(format!(
                    "store dim {} does not match embedder dim {}",
                    store.dim(),
                    embedder.spec().dim
                )));
            }
        }
        if cfg.prompt_mode == PromptMode::Rag && store.as_ref().is_none_or(|s| s.is_empty()) {
            return Err(RagError::NoContext);
        }
        Ok(RagEngine {
            model_id: cfg.model_id.clone(),
            k: cfg.k,
            temperature: cfg.temperature,
            prompt_mode: cfg.prompt_mode,
            embedder,
            backend,
            store,
        })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn prompt_mode(&self) -> PromptMode {
        self.prompt_mode
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn store(&self) -> Option<&Arc<VectorStore>> {
        self.store.as_ref()
    }

    /// Top-k hits for `text`, descending score.
    pub fn retrieve_context(&self, text: &str) -> Result<Vec<Hit>, RagError> {
        self.retrieve_k(text, self.k)
    }

    pub fn retrieve_k(&self, text: &str, k: usize) -> Result<Vec<Hit>, RagError> {
        let store = self
            .store
            .as_ref()
            .filter(|s| !s.is_empty())
            .ok_or(RagError::NoContext)?;
        if text.trim().is_empty() {
            return Err(RagError::EmptyQuery);
        }
        let query = self.embedder.embed_one(text)?;
        Ok(store.search(&query, k, None)?)
    }

    fn request(&self, system: String, user: String) -> ChatRequest {
        ChatRequest::new(
            &self.model_id,
            vec![ChatMessage::system(system), ChatMessage::user(user)],
        )
        .with_temperature(self.temperature)
    }

    /// Retrieval and fatal backend errors are returned; any other backend
    /// failure yields an INVALID answer with the reason attached.
    pub fn answer_mcq(&self, question: &McqQuestion) -> Result<McqAnswer, RagError> {
        let user = question.user_message();
        let hits = match self.prompt_mode {
            PromptMode::Rag => self.retrieve_context(&user)?,
            PromptMode::Baseline => Vec::new(),
        };
        let system = build_system_prompt(&hits, self.prompt_mode)?;
        let retrieved_ids = hits.iter().map(|h| h.chunk_id).collect();
        match chat_complete(&self.request(system, user), self.backend.as_ref()) {
            Ok(completion) => Ok(McqAnswer {
                letter: parse_answer_letter(&completion.content, &question.letters()),
                raw_completion: completion.content,
                retrieved_ids,
                failure: None,
            }),
            Err(e) if e.is_fatal() => Err(e.into()),
            Err(e) => {
                warn!(question = %question.question_id, error = %e, "completion failed; answer recorded as invalid");
                Ok(McqAnswer {
                    letter: None,
                    raw_completion: String::new(),
                    retrieved_ids,
                    failure: Some(e.to_string()),
                })
            }
        }
    }

    /// Free-text answer with citations resolved against the retrieved hits.
    pub fn answer_chat(&self, query: &str) -> Result<ChatAnswer, RagError> {
        self.answer_chat_k(query, self.k)
    }

    /// [`RagEngine::answer_chat`] with a per-call retrieval depth.
    ///
    /// In baseline mode the query goes to the model alone: no system
    /// prompt, no retrieval, no citations.
    pub fn answer_chat_k(&self, query: &str, k: usize) -> Result<ChatAnswer, RagError> {
        if query.trim().is_empty() {
            return Err(RagError::EmptyQuery);
        }
        if self.prompt_mode == PromptMode::Baseline {
            let request = ChatRequest::new(&self.model_id, vec![ChatMessage::user(query)])
                .with_temperature(self.temperature);
            let completion = chat_complete(&request, self.backend.as_ref())?;
            return Ok(ChatAnswer {
                answer_text: completion.content,
                citations: Vec::new(),
                retrieved: Vec::new(),
                citations_fallback: false,
            });
        }
        let hits = self.retrieve_k(query, k)?;
        let system = build_chat_system_prompt(&hits)?;
        let completion = chat_complete(
            &self.request(system, query.to_string()),
            self.backend.as_ref(),
        )?;

        let citations: Vec<Citation> = cited_ids(&completion.content)
            .into_iter()
            .filter_map(|id| hits.iter().find(|h| h.chunk_id == id))
            .map(citation)
            .collect();
        let citations_fallback = citations.is_empty();
        let citations = if citations_fallback {
            hits.iter().take(FALLBACK_CITATIONS).map(citation).collect()
        } else {
            citations
        };
        Ok(ChatAnswer {
            answer_text: completion.content,
            citations,
            retrieved: hits,
            citations_fallback,
        })
    }
}
