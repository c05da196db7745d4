//! Blocking JSON-over-HTTP POST with retries, shared by the embedding and
//! chat clients.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use tracing::warn;

use crate::retry::{Attempt, Gate, RetryError, RetryPolicy};

#[derive(Debug)]
pub(crate) enum PostError {
    /// Every attempt was answered with 429.
    RateLimited { attempts: u32 },
    /// 5xx or transport failures until attempts ran out.
    Unavailable { attempts: u32, reason: String },
    /// Non-retryable 4xx.
    Rejected { status: u16, body: String },
    /// 2xx with a body that did not decode.
    Decode(String),
}

enum Failure {
    RateLimited,
    Transient(String),
    Rejected(u16, String),
    Decode(String),
}

#[derive(Debug)]
pub(crate) struct JsonClient {
    agent: ureq::Agent,
    api_key: Option<String>,
    retry: RetryPolicy,
    gate: Gate,
}

impl JsonClient {
    pub(crate) fn new(
        api_key: Option<String>,
        retry: RetryPolicy,
        max_in_flight: usize,
        per_minute: Option<u32>,
        timeout: Duration,
    ) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        JsonClient {
            agent,
            api_key: api_key.filter(|k| !k.is_empty()),
            retry,
            gate: Gate::new(max_in_flight, per_minute),
        }
    }

    pub(crate) fn post<B, T>(&self, url: &str, body: &B) -> Result<T, PostError>
    where
        B: Serialize,
        T: DeserializeOwned,
    {
        let result = self.retry.run(|attempt| {
            let _permit = self.gate.acquire();
            let mut request = self
                .agent
                .post(url)
                .header("Content-Type", "application/json");
            if let Some(key) = &self.api_key {
                request = request.header("Authorization", format!("Bearer {key}"));
            }
            match request.send_json(body) {
                Ok(mut response) => {
                    let status = response.status().as_u16();
                    if (200..300).contains(&status) {
                        match response.body_mut().read_json::<T>() {
                            Ok(v) => Attempt::Done(v),
                            Err(e) => Attempt::Fail(Failure::Decode(e.to_string())),
                        }
                    } else {
                        let text = response.body_mut().read_to_string().unwrap_or_default();
                        warn!(url, status, attempt, "provider returned an error status");
                        match status {
                            429 => Attempt::Retry(Failure::RateLimited),
                            500..=599 => {
                                Attempt::Retry(Failure::Transient(format!("HTTP {status}: {text}")))
                            }
                            _ => Attempt::Fail(Failure::Rejected(status, text)),
                        }
                    }
                }
                Err(e) => {
                    warn!(url, attempt, error = %e, "transport failure");
                    Attempt::Retry(Failure::Transient(e.to_string()))
                }
            }
        });
        result.map_err(|e| match e {
            RetryError::Exhausted {
                attempts,
                last: Failure::RateLimited,
            } => PostError::RateLimited { attempts },
            RetryError::Exhausted {
                attempts,
                last: Failure::Transient(reason),
            } => PostError::Unavailable { attempts, reason },
            RetryError::Exhausted { last, .. } | RetryError::Fatal(last) => match last {
                Failure::Rejected(status, body) => PostError::Rejected { status, body },
                Failure::Decode(msg) => PostError::Decode(msg),
                Failure::RateLimited => PostError::RateLimited { attempts: 1 },
                Failure::Transient(reason) => PostError::Unavailable {
                    attempts: 1,
                    reason,
                },
            },
        })
    }
}
