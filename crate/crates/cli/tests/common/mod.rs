//! On-disk fixtures shared by the CLI and API tests.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;
use urobot_core::llm::OracleFixture;
use urobot_core::mcq::{Letter, McqQuestion};

pub const DIM: usize = 64;
pub const QUESTIONS: usize = 20;
pub const DISTRACTORS: usize = 10;

pub fn topic(i: usize) -> String {
    format!("topic{i:02}alpha topic{i:02}beta topic{i:02}gamma")
}

/// One document, one short block per question topic followed by
/// distractor blocks, so chunk `i` answers question `i`.
pub fn write_corpus(dir: &Path) -> PathBuf {
    let mut blocks: Vec<serde_json::Value> = (0..QUESTIONS)
        .map(|i| json!({"kind": "paragraph", "text": format!("Recommendation on {t}. The panel reviewed {t}.", t = topic(i))}))
        .collect();
    blocks.extend((0..DISTRACTORS).map(|j| {
        json!({"kind": if j % 2 == 0 { "table" } else { "paragraph" },
               "text": format!("Bladder cancer background filler{j} on haematuria and epidemiology.")})
    }));
    let doc = json!({"doc_key": "nmibc", "title": "Non-muscle-invasive Bladder Cancer",
                     "pages": [{"page": 4, "blocks": blocks}]});
    fs::write(dir.join("nmibc.json"), doc.to_string()).unwrap();
    let manifest = json!({"corpus_id": "fixture", "target_chunk_size": 1000,
                          "documents": [{"doc_key": "nmibc", "title": "Non-muscle-invasive Bladder Cancer", "path": "nmibc.json"}]});
    let path = dir.join("manifest.json");
    fs::write(&path, manifest.to_string()).unwrap();
    path
}

/// Three short blocks on two pages: three chunks at any target size.
pub fn write_small_corpus(dir: &Path) -> PathBuf {
    let doc = json!({"doc_key": "rcc", "title": "Renal Cell Carcinoma", "pages": [
        {"page": 1, "blocks": [
            {"kind": "paragraph", "text": "Prognosis of renal carcinoma depends on stage."},
            {"kind": "table", "text": "Stage | Five-year survival"}
        ]},
        {"page": 2, "blocks": [{"kind": "paragraph", "text": "Follow-up intervals depend on risk group."}]}
    ]});
    fs::write(dir.join("rcc.json"), doc.to_string()).unwrap();
    let manifest = json!({"corpus_id": "small", "target_chunk_size": 1000,
                          "documents": [{"doc_key": "rcc", "title": "Renal Cell Carcinoma", "path": "rcc.json"}]});
    let path = dir.join("small_manifest.json");
    fs::write(&path, manifest.to_string()).unwrap();
    path
}

pub fn questions() -> Vec<McqQuestion> {
    let letters = [Letter::A, Letter::B, Letter::C, Letter::D, Letter::E];
    (0..QUESTIONS)
        .map(|i| McqQuestion {
            question_id: format!("q{i:02}"),
            stem: format!(
                "{} Which statement about {} is correct?",
                OracleFixture::marker(&format!("q{i:02}")),
                topic(i)
            ),
            options: letters
                .iter()
                .map(|l| (*l, format!("statement {}", l.as_char())))
                .collect(),
            correct: letters[i % 5],
        })
        .collect()
}

pub fn write_questions(dir: &Path) -> PathBuf {
    let path = dir.join("questions.jsonl");
    let lines: Vec<String> = questions()
        .iter()
        .map(|q| serde_json::to_string(q).unwrap())
        .collect();
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

/// Knows question `i` from chunk `i` for `i < covered`, and the first
/// `prior` questions without context.
pub fn oracle(covered: usize, prior: usize) -> OracleFixture {
    OracleFixture {
        answer_key: questions()
            .iter()
            .map(|q| (q.question_id.clone(), q.correct))
            .collect(),
        knowledge: (0..covered)
            .map(|i| (i as u64, [format!("q{i:02}")].into()))
            .collect(),
        prior_knowledge: (0..prior).map(|i| format!("q{i:02}")).collect(),
    }
}

pub fn write_oracle(dir: &Path, name: &str, fixture: &OracleFixture) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string(fixture).unwrap()).unwrap();
    path
}

/// App config pointing at `store` with the stub embedder and an oracle
/// backend.
pub fn write_config(dir: &Path, store: &Path, oracle_path: &Path) -> PathBuf {
    let text = format!(
        r#"store_path = {store:?}

[rag]
model_id = "oracle-model"
k = 10
embedder = {{ provider = "deterministic_stub", model_name = "hash-embed-v1", dim = {DIM} }}
backend = {{ kind = "oracle_mock", fixture_path = {oracle_path:?} }}
"#
    );
    let path = dir.join("urobot.toml");
    fs::write(&path, text).unwrap();
    path
}
