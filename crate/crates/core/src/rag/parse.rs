use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;

use crate::mcq::Letter;

fn answer_phrase_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // The keyword is case-insensitive, the letter is not ("answer is a bit ...").
    RE.get_or_init(|| Regex::new(r"(?i:\banswer\s*(?:is|:))\s*\(?([A-E])\b").unwrap())
}

fn cited_id_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"Document ID (\d+)").unwrap())
}

/// Extracts the chosen letter from a completion, or `None` (INVALID).
///
/// 1. The first alphanumeric token is a single allowed letter, followed by
///    end of text, whitespace, `.`, `)` or `:`.
/// 2. Otherwise the first "answer is X" / "Answer: X" with an allowed X.
pub fn parse_answer_letter(raw: &str, allowed: &[Letter]) -> Option<Letter> {
    let text = raw.trim();
    let start = text.find(|c: char| c.is_alphanumeric());
    if let Some(start) = start {
        let rest = &text[start..];
        let end = rest
            .find(|c: char| !c.is_alphanumeric())
            .unwrap_or(rest.len());
        let token = &rest[..end];
        let follow = rest[end..].chars().next();
        let clean_end = follow.is_none_or(|c| c.is_whitespace() || matches!(c, '.' | ')' | ':'));
        if token.chars().count() == 1 && clean_end {
            if let Some(letter) = token.chars().next().and_then(Letter::from_char) {
                if allowed.contains(&letter) {
                    return Some(letter);
                }
            }
        }
    }
    answer_phrase_re()
        .captures_iter(text)
        .filter_map(|c| c[1].chars().next().and_then(Letter::from_char))
        .find(|l| allowed.contains(l))
}

/// Every `Document ID n` in `text`, deduplicated in first-mention order.
pub fn cited_ids(text: &str) -> Vec<u64> {
    let mut seen = HashSet::new();
    cited_id_re()
        .captures_iter(text)
        .filter_map(|c| c[1].parse::<u64>().ok())
        .filter(|id| seen.insert(*id))
        .collect()
}
