use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatCompletion, ChatMessage, ChatRequest, GatewayError, Usage};
use crate::http::{JsonClient, PostError};
use crate::retry::RetryPolicy;

/// OpenAI-compatible `POST {endpoint}/chat/completions` client.
///
/// Retries 429 and 5xx responses (and transport errors) with jittered
/// exponential backoff; other 4xx responses fail immediately.
#[derive(Debug)]
pub struct HttpChatBackend {
    url: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    max_in_flight: usize,
    per_minute: Option<u32>,
    timeout: Duration,
    client: JsonClient,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl HttpChatBackend {
    pub fn new(endpoint: &str, api_key: Option<String>) -> Self {
        let url = format!("{}/chat/completions", endpoint.trim_end_matches('/'));
        let retry = RetryPolicy::default();
        let timeout = Duration::from_secs(120);
        HttpChatBackend {
            client: JsonClient::new(api_key.clone(), retry, 4, None, timeout),
            url,
            api_key,
            retry,
            max_in_flight: 4,
            per_minute: None,
            timeout,
        }
    }

    fn rebuild(mut self) -> Self {
        self.client = JsonClient::new(
            self.api_key.clone(),
            self.retry,
            self.max_in_flight,
            self.per_minute,
            self.timeout,
        );
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self.rebuild()
    }

    pub fn with_limits(mut self, max_in_flight: usize, per_minute: Option<u32>) -> Self {
        self.max_in_flight = max_in_flight;
        self.per_minute = per_minute;
        self.rebuild()
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self.rebuild()
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl ChatBackend for HttpChatBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatCompletion, GatewayError> {
        let body = WireRequest {
            model: &request.model_id,
            messages: &request.messages,
            temperature: request.temperature,
        };
        let response: WireResponse = self.client.post(&self.url, &body).map_err(|e| match e {
            PostError::RateLimited { attempts } => GatewayError::RateLimitedExhausted { attempts },
            PostError::Unavailable { attempts, reason } => {
                GatewayError::ProviderUnavailable { attempts, reason }
            }
            PostError::Rejected { status, body } => GatewayError::ProviderRejected { status, body },
            PostError::Decode(msg) => GatewayError::MalformedResponse(msg),
        })?;
        let choice = response
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| GatewayError::MalformedResponse("no choices".into()))?;
        let usage = response
            .usage
            .map(|u| Usage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            })
            .unwrap_or_default();
        Ok(ChatCompletion {
            content: choice.message.content.unwrap_or_default(),
            model_id: request.model_id.clone(),
            usage,
        })
    }
}
