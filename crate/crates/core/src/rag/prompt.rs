//! System prompts. The exam templates are reproduced byte-for-byte from the
//! resource files; `{context}` is the only placeholder.

use super::{PromptMode, RagError};
use crate::store::Hit;

pub const RAG_EXAM_TEMPLATE: &str = include_str!("../../resources/prompts/rag_exam.txt");
pub const BASELINE_EXAM_PROMPT: &str = include_str!("../../resources/prompts/baseline_exam.txt");
pub const RAG_CHAT_TEMPLATE: &str = include_str!("../../resources/prompts/rag_chat.txt");

const PLACEHOLDER: &str = "{context}";

/// `"Document ID {chunk_id}: {text}\n"` per hit, in the given order.
pub fn context_block(hits: &[Hit]) -> String {
    let mut out = String::new();
    for hit in hits {
        out.push_str("Document ID ");
        out.push_str(&hit.chunk_id.to_string());
        out.push_str(": ");
        out.push_str(&hit.chunk.text);
        out.push('\n');
    }
    out
}

fn fill(template: &str, hits: &[Hit]) -> Result<String, RagError> {
    if hits.is_empty() {
        return Err(RagError::NoContext);
    }
    Ok(template.replacen(PLACEHOLDER, &context_block(hits), 1))
}

pub fn build_system_prompt(hits: &[Hit], mode: PromptMode) -> Result<String, RagError> {
    match mode {
        PromptMode::Rag => fill(RAG_EXAM_TEMPLATE, hits),
        PromptMode::Baseline => Ok(BASELINE_EXAM_PROMPT.to_string()),
    }
}

pub fn build_chat_system_prompt(hits: &[Hit]) -> Result<String, RagError> {
    fill(RAG_CHAT_TEMPLATE, hits)
}
