use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatCompletion, ChatRequest, GatewayError, Usage};
use crate::mcq::Letter;

/// Fixture questions carry `[qid:<id>]` somewhere in their stem.
pub const QUESTION_MARKER_PREFIX: &str = "[qid:";

/// Deterministic stand-in for a model: it "knows" an answer only when a
/// chunk mapped to the question is present in the prompt context.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleFixture {
    pub answer_key: BTreeMap<String, Letter>,
    /// chunk_id -> question ids answerable from that chunk.
    #[serde(default)]
    pub knowledge: BTreeMap<u64, BTreeSet<String>>,
    /// Questions answered correctly even without context.
    #[serde(default)]
    pub prior_knowledge: BTreeSet<String>,
}

impl OracleFixture {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let raw = fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&raw)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))
    }

    pub fn marker(question_id: &str) -> String {
        format!("{QUESTION_MARKER_PREFIX}{question_id}]")
    }
}

fn marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[qid:([^\]\s]+)\]").unwrap())
}

fn doc_id_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"Document ID (\d+):").unwrap())
}

fn option_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^([A-E])\. ").unwrap())
}

fn word_count(s: &str) -> u64 {
    s.split_whitespace().count() as u64
}

pub fn oracle_mock_complete(
    request: &ChatRequest,
    fixture: &OracleFixture,
) -> Result<ChatCompletion, GatewayError> {
    let user = request.last_user_text().unwrap_or_default();
    let context_ids: Vec<u64> = request
        .system_text()
        .flat_map(|s| doc_id_re().captures_iter(s))
        .filter_map(|c| c[1].parse().ok())
        .collect();

    let content = match marker_re().captures(user) {
        Some(caps) => {
            let qid = &caps[1];
            let key = *fixture
                .answer_key
                .get(qid)
                .ok_or_else(|| GatewayError::UnknownQuestion(qid.to_string()))?;
            let knows = if context_ids.is_empty() {
                fixture.prior_knowledge.contains(qid)
            } else {
                context_ids
                    .iter()
                    .any(|id| fixture.knowledge.get(id).is_some_and(|qs| qs.contains(qid)))
            };
            let letter = if knows {
                key
            } else {
                let mut letters: Vec<Letter> = option_re()
                    .captures_iter(user)
                    .filter_map(|c| c[1].chars().next().and_then(Letter::from_char))
                    .collect();
                letters.sort();
                letters.dedup();
                if letters.is_empty() {
                    letters = Letter::ALL.to_vec();
                }
                key.next_in(&letters)
            };
            letter.to_string()
        }
        // Free-text chat: cite the top passage so citation handling can be exercised.
        None => match context_ids.first() {
            Some(id) => format!(
                "The retrieved guideline passage addresses this question (Document ID {id})."
            ),
            None => return Err(GatewayError::MissingQuestionMarker),
        },
    };

    let prompt_tokens = request
        .messages
        .iter()
        .map(|m| word_count(&m.content))
        .sum();
    Ok(ChatCompletion {
        usage: Usage {
            prompt_tokens,
            completion_tokens: word_count(&content),
        },
        content,
        model_id: request.model_id.clone(),
    })
}

#[derive(Debug, Clone)]
pub struct OracleBackend {
    fixture: OracleFixture,
}

impl OracleBackend {
    pub fn new(fixture: OracleFixture) -> Self {
        OracleBackend { fixture }
    }

    pub fn fixture(&self) -> &OracleFixture {
        &self.fixture
    }
}

impl ChatBackend for OracleBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatCompletion, GatewayError> {
        oracle_mock_complete(request, &self.fixture)
    }
}
