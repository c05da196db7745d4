//! Multiple-choice questions and answer letters.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Letter {
    A,
    B,
    C,
    D,
    E,
}

impl Letter {
    pub const ALL: [Letter; 5] = [Letter::A, Letter::B, Letter::C, Letter::D, Letter::E];

    pub fn from_char(c: char) -> Option<Letter> {
        match c.to_ascii_uppercase() {
            'A' => Some(Letter::A),
            'B' => Some(Letter::B),
            'C' => Some(Letter::C),
            'D' => Some(Letter::D),
            'E' => Some(Letter::E),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        (b'A' + self.index() as u8) as char
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// The next letter among `letters` (sorted), wrapping around.
    pub fn next_in(self, letters: &[Letter]) -> Letter {
        match letters.iter().position(|l| *l == self) {
            Some(i) => letters[(i + 1) % letters.len()],
            None => letters.first().copied().unwrap_or(self),
        }
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

#[derive(Debug, Error)]
pub enum QuestionError {
    #[error("question {id}: {reason}")]
    Invalid { id: String, reason: String },
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqQuestion {
    pub question_id: String,
    pub stem: String,
    pub options: BTreeMap<Letter, String>,
    pub correct: Letter,
}

impl McqQuestion {
    pub fn validate(&self) -> Result<(), QuestionError> {
        let invalid = |reason: &str| QuestionError::Invalid {
            id: self.question_id.clone(),
            reason: reason.to_string(),
        };
        if self.question_id.trim().is_empty() {
            return Err(invalid("empty question_id"));
        }
        if self.options.len() < 2 {
            return Err(invalid("needs at least two options"));
        }
        if self.options.keys().enumerate().any(|(i, l)| l.index() != i) {
            return Err(invalid("option letters must be contiguous from A"));
        }
        if !self.options.contains_key(&self.correct) {
            return Err(invalid("correct letter is not among the options"));
        }
        Ok(())
    }

    pub fn letters(&self) -> Vec<Letter> {
        self.options.keys().copied().collect()
    }

    /// Stem followed by one `"{letter}. {option}"` line per option.
    pub fn user_message(&self) -> String {
        let mut out = self.stem.clone();
        for (letter, text) in &self.options {
            out.push('\n');
            out.push_str(&format!("{letter}. {text}"));
        }
        out
    }
}

/// Reads a JSON-lines question file and validates every entry.
pub fn load_questions(path: &Path) -> Result<Vec<McqQuestion>, QuestionError> {
    let raw = fs::read_to_string(path).map_err(|source| QuestionError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let q: McqQuestion = serde_json::from_str(line).map_err(|e| QuestionError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        q.validate()?;
        out.push(q);
    }
    Ok(out)
}
