//! Text embedding providers and vector math.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::{JsonClient, PostError};
use crate::retry::RetryPolicy;

pub const EMBED_API_KEY_ENV: &str = "UROBOT_EMBED_API_KEY";

const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("no texts to embed")]
    EmptyInput,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("vector has (near) zero norm")]
    ZeroVector,
    #[error("vector has NaN or infinite components")]
    NonFinite,
    #[error("embedding provider unavailable after {attempts} attempt(s): {reason}")]
    ProviderUnavailable { attempts: u32, reason: String },
    #[error("embedding provider rejected the request: {0}")]
    ProviderRejected(String),
    #[error("invalid embedder spec: {0}")]
    InvalidSpec(String),
}

/// A finite, L2-normalized embedding.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    /// Normalizes `values` to unit length.
    pub fn new(mut values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.is_empty() {
            return Err(EmbedError::DimensionMismatch {
                expected: 1,
                actual: 0,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        let norm = l2_norm(&values);
        if norm < NORM_EPS {
            return Err(EmbedError::ZeroVector);
        }
        for v in &mut values {
            *v /= norm;
        }
        Ok(Vector(values))
    }

    /// Wraps already-normalized values without touching their bits.
    /// Used when reading persisted vectors.
    pub(crate) fn from_normalized(values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        if (l2_norm(&values) - 1.0).abs() > 1e-9 {
            return Err(EmbedError::ZeroVector);
        }
        Ok(Vector(values))
    }

    /// Unit basis vector `e_index`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut values = vec![0.0; dim.max(1)];
        values[index] = 1.0;
        Vector(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Cosine similarity of two raw vectors, clamped to `[-1, 1]`.
pub fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64, EmbedError> {
    if a.len() != b.len() {
        return Err(EmbedError::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na < NORM_EPS || nb < NORM_EPS {
        return Err(EmbedError::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn cosine(a: &Vector, b: &Vector) -> Result<f64, EmbedError> {
    cosine_slices(a.values(), b.values())
}

/// 64-bit FNV-1a; stable across platforms and releases.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Feature-hashing embedder used offline.
///
/// Lowercases, splits on non-alphanumeric characters, and for each token adds
/// ±1 (sign from the top hash bit) to bucket `hash % dim`. An all-zero
/// accumulation maps to `e_0`.
pub fn hash_embed(text: &str, dim: usize) -> Vector {
    let dim = dim.max(1);
    let mut acc = vec![0.0f64; dim];
    let lower = text.to_lowercase();
    for token in lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
    {
        let h = fnv1a64(token.as_bytes());
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        acc[(h % dim as u64) as usize] += sign;
    }
    Vector::new(acc).unwrap_or_else(|_| Vector::basis(dim, 0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provider {
    HttpApi,
    DeterministicStub,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderSpec {
    pub provider: Provider,
    pub model_name: String,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
}

fn default_batch_size() -> usize {
    64
}

fn default_max_in_flight() -> usize {
    4
}

impl EmbedderSpec {
    pub fn stub(dim: usize) -> Self {
        EmbedderSpec {
            provider: Provider::DeterministicStub,
            model_name: "hash-embed-v1".into(),
            dim,
            endpoint: None,
            batch_size: default_batch_size(),
            max_in_flight: default_max_in_flight(),
        }
    }

    pub fn http(model_name: &str, dim: usize, endpoint: &str) -> Self {
        EmbedderSpec {
            provider: Provider::HttpApi,
            model_name: model_name.into(),
            dim,
            endpoint: Some(endpoint.into()),
            batch_size: default_batch_size(),
            max_in_flight: default_max_in_flight(),
        }
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim == 0 {
            return Err(EmbedError::InvalidSpec("dim must be at least 1".into()));
        }
        if self.model_name.trim().is_empty() {
            return Err(EmbedError::InvalidSpec("model_name is empty".into()));
        }
        if self.provider == Provider::HttpApi && self.endpoint.as_deref().is_none_or(str::is_empty)
        {
            return Err(EmbedError::InvalidSpec(
                "http_api provider needs an endpoint".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(EmbedError::InvalidSpec(
                "batch_size must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Arc<dyn Embedder>, EmbedError> {
        self.validate()?;
        Ok(match self.provider {
            Provider::DeterministicStub => Arc::new(HashEmbedder::new(self.clone())),
            Provider::HttpApi => Arc::new(HttpEmbedder::new(
                self.clone(),
                std::env::var(EMBED_API_KEY_ENV).ok(),
                RetryPolicy::default(),
            )),
        })
    }
}

pub trait Embedder: Send + Sync {
    fn spec(&self) -> &EmbedderSpec;

    /// One unit vector per input text, in input order.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vector>, EmbedError>;

    fn embed_one(&self, text: &str) -> Result<Vector, EmbedError> {
        Ok(self.embed_batch(&[text])?.remove(0))
    }
}

/// Builds the provider described by `spec` and embeds `texts` with it.
pub fn embed_batch(texts: &[&str], spec: &EmbedderSpec) -> Result<Vec<Vector>, EmbedError> {
    spec.build()?.embed_batch(texts)
}

fn check_inputs(texts: &[&str]) -> Result<(), EmbedError> {
    if texts.is_empty() || texts.iter().any(|t| t.is_empty()) {
        return Err(EmbedError::EmptyInput);
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct HashEmbedder {
    spec: EmbedderSpec,
}

impl HashEmbedder {
    pub fn new(spec: EmbedderSpec) -> Self {
        HashEmbedder { spec }
    }
}

impl Embedder for HashEmbedder {
    fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vector>, EmbedError> {
        check_inputs(texts)?;
        Ok(texts.iter().map(|t| hash_embed(t, self.spec.dim)).collect())
    }
}

/// OpenAI-compatible embeddings client: `POST {endpoint}` with
/// `{model, input}` and a `{data: [{index, embedding}]}` response.
#[derive(Debug)]
pub struct HttpEmbedder {
    spec: EmbedderSpec,
    client: JsonClient,
}

#[derive(Serialize)]
struct EmbeddingsRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    index: usize,
    embedding: Vec<f64>,
}

impl HttpEmbedder {
    pub fn new(spec: EmbedderSpec, api_key: Option<String>, retry: RetryPolicy) -> Self {
        let client = JsonClient::new(
            api_key,
            retry,
            spec.max_in_flight,
            None,
            Duration::from_secs(120),
        );
        HttpEmbedder { spec, client }
    }

    fn embed_chunk(&self, texts: &[&str]) -> Result<Vec<Vector>, EmbedError> {
        let endpoint = self.spec.endpoint.as_deref().unwrap_or_default();
        let body = EmbeddingsRequest {
            model: &self.spec.model_name,
            input: texts,
        };
        let response: EmbeddingsResponse =
            self.client.post(endpoint, &body).map_err(|e| match e {
                PostError::RateLimited { attempts } => EmbedError::ProviderUnavailable {
                    attempts,
                    reason: "rate limited".into(),
                },
                PostError::Unavailable { attempts, reason } => {
                    EmbedError::ProviderUnavailable { attempts, reason }
                }
                PostError::Rejected { status, body } => {
                    EmbedError::ProviderRejected(format!("HTTP {status}: {body}"))
                }
                PostError::Decode(msg) => {
                    EmbedError::ProviderRejected(format!("bad response: {msg}"))
                }
            })?;

        if response.data.len() != texts.len() {
            return Err(EmbedError::ProviderRejected(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                response.data.len()
            )));
        }
        let mut slots: Vec<Option<Vector>> = vec![None; texts.len()];
        for item in response.data {
            if item.embedding.len() != self.spec.dim {
                return Err(EmbedError::DimensionMismatch {
                    expected: self.spec.dim,
                    actual: item.embedding.len(),
                });
            }
            let slot = slots.get_mut(item.index).ok_or_else(|| {
                EmbedError::ProviderRejected(format!("index {} out of range", item.index))
            })?;
            *slot = Some(Vector::new(item.embedding)?);
        }
        slots
            .into_iter()
            .map(|v| {
                v.ok_or_else(|| EmbedError::ProviderRejected("missing index in response".into()))
            })
            .collect()
    }
}

impl Embedder for HttpEmbedder {
    fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vector>, EmbedError> {
        check_inputs(texts)?;
        let batches: Vec<&[&str]> = texts.chunks(self.spec.batch_size).collect();
        let mut out = Vec::with_capacity(texts.len());
        // The client gate enforces max_in_flight; each wave spawns at most that many.
        for wave in batches.chunks(self.spec.max_in_flight.max(1)) {
            let results: Vec<Result<Vec<Vector>, EmbedError>> = std::thread::scope(|s| {
                let handles: Vec<_> = wave
                    .iter()
                    .map(|batch| s.spawn(move || self.embed_chunk(batch)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("embedding worker panicked"))
                    .collect()
            });
            for r in results {
                out.extend(r?);
            }
        }
        Ok(out)
    }
}
