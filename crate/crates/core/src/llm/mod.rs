//! Chat-completion backends.
//!
//! Every call is a single stateless request: the caller supplies the full
//! message list and nothing is remembered between calls.

mod http;
mod oracle;
mod scripted;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::retry::RetryPolicy;

pub use http::HttpChatBackend;
pub use oracle::{oracle_mock_complete, OracleBackend, OracleFixture, QUESTION_MARKER_PREFIX};
pub use scripted::{ScriptedBackend, TranscriptEntry};

pub const LLM_API_KEY_ENV: &str = "UROBOT_LLM_API_KEY";
pub const DEFAULT_TEMPERATURE: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("provider unavailable after {attempts} attempt(s): {reason}")]
    ProviderUnavailable { attempts: u32, reason: String },
    #[error("still rate limited after {attempts} attempt(s)")]
    RateLimitedExhausted { attempts: u32 },
    #[error("provider rejected the request with HTTP {status}: {body}")]
    ProviderRejected { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("no transcript entry for fingerprint {0}")]
    TranscriptMiss(String),
    #[error("request carries no question marker")]
    MissingQuestionMarker,
    #[error("question {0:?} is not in the answer key")]
    UnknownQuestion(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend configuration error: {0}")]
    Config(String),
}

impl GatewayError {
    /// Errors that make further calls to the same backend pointless.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            GatewayError::ProviderUnavailable { .. }
                | GatewayError::RateLimitedExhausted { .. }
                | GatewayError::ProviderRejected { .. }
                | GatewayError::Config(_)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        ChatRequest {
            model_id: model_id.into(),
            messages,
            temperature: DEFAULT_TEMPERATURE,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !self.messages.iter().any(|m| m.role == Role::User) {
            return Err(GatewayError::InvalidRequest("no user message".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        Ok(())
    }

    /// SHA-256 (hex) of the compact JSON encoding of the message list.
    pub fn fingerprint(&self) -> String {
        fingerprint(&self.messages)
    }

    pub fn system_text(&self) -> impl Iterator<Item = &str> {
        self.messages
            .iter()
            .filter(|m| m.role == Role::System)
            .map(|m| m.content.as_str())
    }

    pub fn last_user_text(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }
}

pub fn fingerprint(messages: &[ChatMessage]) -> String {
    let encoded = serde_json::to_vec(messages).expect("messages serialize");
    hex::encode(Sha256::digest(&encoded))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatCompletion {
    pub content: String,
    pub model_id: String,
    pub usage: Usage,
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatCompletion, GatewayError>;
}

/// Validates `request` and sends it to `backend`.
pub fn chat_complete(
    request: &ChatRequest,
    backend: &dyn ChatBackend,
) -> Result<ChatCompletion, GatewayError> {
    request.validate()?;
    backend.complete(request)
}

fn default_max_in_flight() -> usize {
    4
}

fn default_timeout_secs() -> u64 {
    120
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    HttpApi {
        /// Base URL; `/chat/completions` is appended.
        endpoint: String,
        #[serde(default = "default_max_in_flight")]
        max_in_flight: usize,
        #[serde(default)]
        requests_per_minute: Option<u32>,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
        #[serde(default)]
        retry: RetryPolicy,
    },
    ScriptedMock {
        transcript_path: PathBuf,
    },
    OracleMock {
        fixture_path: PathBuf,
    },
}

impl BackendSpec {
    pub fn http(endpoint: &str) -> Self {
        BackendSpec::HttpApi {
            endpoint: endpoint.to_string(),
            max_in_flight: default_max_in_flight(),
            requests_per_minute: None,
            timeout_secs: default_timeout_secs(),
            retry: RetryPolicy::default(),
        }
    }

    pub fn build(&self) -> Result<Arc<dyn ChatBackend>, GatewayError> {
        Ok(match self {
            BackendSpec::HttpApi {
                endpoint,
                max_in_flight,
                requests_per_minute,
                timeout_secs,
                retry,
            } => {
                if endpoint.trim().is_empty() {
                    return Err(GatewayError::Config(
                        "http_api backend needs an endpoint".into(),
                    ));
                }
                Arc::new(
                    HttpChatBackend::new(endpoint, std::env::var(LLM_API_KEY_ENV).ok())
                        .with_retry(*retry)
                        .with_limits(*max_in_flight, *requests_per_minute)
                        .with_timeout(std::time::Duration::from_secs(*timeout_secs)),
                )
            }
            BackendSpec::ScriptedMock { transcript_path } => {
                Arc::new(ScriptedBackend::load(transcript_path)?)
            }
            BackendSpec::OracleMock { fixture_path } => {
                Arc::new(OracleBackend::new(OracleFixture::load(fixture_path)?))
            }
        })
    }
}
