use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatCompletion, ChatRequest, GatewayError, Usage};

/// One line of a transcript file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub fingerprint: String,
    pub content: String,
}

/// Replays recorded completions keyed by request fingerprint.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    replies: HashMap<String, String>,
}

impl ScriptedBackend {
    pub fn new(entries: impl IntoIterator<Item = TranscriptEntry>) -> Self {
        ScriptedBackend {
            replies: entries
                .into_iter()
                .map(|e| (e.fingerprint, e.content))
                .collect(),
        }
    }

    /// Loads a JSON-lines transcript; later lines override earlier ones.
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let raw = fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        let entries = raw
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str::<TranscriptEntry>(l)
                    .map_err(|e| GatewayError::Config(format!("{}:{}: {e}", path.display(), i + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(entries))
    }

    pub fn len(&self) -> usize {
        self.replies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replies.is_empty()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatCompletion, GatewayError> {
        let fp = request.fingerprint();
        let content = self
            .replies
            .get(&fp)
            .cloned()
            .ok_or(GatewayError::TranscriptMiss(fp))?;
        Ok(ChatCompletion {
            content,
            model_id: request.model_id.clone(),
            usage: Usage::default(),
        })
    }
}
