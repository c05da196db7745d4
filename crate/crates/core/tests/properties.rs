//! Property tests for the invariants of every core module.

mod common;

use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};

use proptest::prelude::*;
use urobot_core::bench::{
    fleiss_kappa, paired_t_test, summarize, unpaired_t_test, BenchmarkMatrix,
};
use urobot_core::corpus::{chunk_block, normalize_ws, ChunkKind, ChunkerConfig};
use urobot_core::embedding::{
    cosine, cosine_slices, hash_embed, EmbedderSpec, HashEmbedder, Vector,
};
use urobot_core::llm::{
    oracle_mock_complete, ChatBackend, ChatCompletion, ChatMessage, ChatRequest, GatewayError,
    ScriptedBackend, TranscriptEntry, Usage,
};
use urobot_core::mcq::Letter;
use urobot_core::rag::{PromptMode, RagConfig, RagEngine};
use urobot_core::store::{ChunkFilter, VectorStore};
use urobot_core::Execution;

use common::{brute_force_top_k, question_ids, record};

const DIM: usize = 16;
const WORDS: [&str; 12] = [
    "bladder", "renal", "tumour", "stage", "risk", "dose", "urine", "biopsy", "grade", "therapy",
    "penile", "scan",
];

fn text_strategy() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS.to_vec()), 1..6).prop_map(|w| w.join(" "))
}

fn kind_strategy() -> impl Strategy<Value = ChunkKind> {
    prop_oneof![Just(ChunkKind::Paragraph), Just(ChunkKind::Table)]
}

/// Records with dense ids, random texts, doc keys and kinds.
fn store_strategy() -> impl Strategy<Value = VectorStore> {
    prop::collection::vec((text_strategy(), 0..3usize, kind_strategy()), 1..40).prop_map(|rows| {
        let records = rows
            .iter()
            .enumerate()
            .map(|(i, (t, d, k))| record(i as u64, &format!("doc{d}"), *k, t, DIM))
            .collect();
        let mut store = VectorStore::new("prop", EmbedderSpec::stub(DIM));
        store.upsert(records).unwrap();
        store
    })
}

fn filter_strategy() -> impl Strategy<Value = Option<ChunkFilter>> {
    prop::option::of(
        (
            prop::option::of(0..3usize),
            prop::option::of(kind_strategy()),
        )
            .prop_map(|(d, kind)| ChunkFilter {
                doc_keys: d.map(|d| BTreeSet::from([format!("doc{d}")])),
                kind,
            }),
    )
}

fn raw_vector(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, dim)
        .prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

fn matrix_strategy(max_q: usize, max_r: usize) -> impl Strategy<Value = Vec<Vec<u8>>> {
    (1..=max_q, 2..=max_r)
        .prop_flat_map(|(q, r)| prop::collection::vec(prop::collection::vec(0..=1u8, r), q))
}

fn matrix(label: &str, cells: Vec<Vec<u8>>) -> BenchmarkMatrix {
    BenchmarkMatrix::from_rows(label, question_ids(cells.len()), cells).unwrap()
}

// ---------------------------------------------------------------------------
// Chunker
// ---------------------------------------------------------------------------

proptest! {
    #[test]
    fn chunks_reconstruct_block_and_respect_size(
        words in prop::collection::vec("[a-z]{1,12}[.]?", 1..400),
        target in 100usize..400,
    ) {
        let text = words.join(" ");
        let cfg = ChunkerConfig::new(target).unwrap();
        let chunks = chunk_block(&text, &cfg);
        prop_assert_eq!(chunks.join(" "), normalize_ws(&text));
        for c in &chunks {
            let n = c.chars().count();
            prop_assert!(n >= 1 && n <= 2 * target, "chunk of {} chars", n);
        }
        prop_assert_eq!(chunk_block(&text, &cfg), chunks);
    }
}

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

proptest! {
    #[test]
    fn cosine_is_symmetric_and_bounded(a in raw_vector(8), b in raw_vector(8)) {
        let ab = cosine_slices(&a, &b).unwrap();
        let ba = cosine_slices(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!(ab.abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn argmax_is_scale_invariant(
        q in raw_vector(6),
        candidates in prop::collection::vec(raw_vector(6), 1..10),
        scale in 0.001f64..1000.0,
    ) {
        let argmax = |q: &[f64]| {
            let mut best = (0, f64::NEG_INFINITY);
            for (i, c) in candidates.iter().enumerate() {
                let s = cosine_slices(q, c).unwrap();
                if s > best.1 {
                    best = (i, s);
                }
            }
            best
        };
        let scaled: Vec<f64> = q.iter().map(|x| x * scale).collect();
        let (i, s) = argmax(&q);
        let (j, t) = argmax(&scaled);
        // Near-ties may legitimately swap under rounding.
        prop_assert!(i == j || (s - t).abs() < 1e-12);
    }

    #[test]
    fn stub_embedding_is_pure(text in text_strategy(), dim in 1usize..64) {
        let a = hash_embed(&text, dim);
        prop_assert_eq!(a.dim(), dim);
        prop_assert_eq!(&a, &hash_embed(&text, dim));
        let norm: f64 = a.values().iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-12);
    }
}

// ---------------------------------------------------------------------------
// Vector store
// ---------------------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn search_equals_brute_force(
        store in store_strategy(),
        query in text_strategy(),
        k in 1usize..50,
        filter in filter_strategy(),
    ) {
        let q = hash_embed(&query, DIM);
        let oracle = brute_force_top_k(store.records(), &q, k, filter.as_ref());
        for exec in [Execution::Sequential, Execution::Parallel] {
            let store = store.clone().with_execution(exec);
            let hits = store.search(&q, k, filter.as_ref()).unwrap();
            prop_assert_eq!(hits.len(), oracle.len());
            for (h, (id, score)) in hits.iter().zip(&oracle) {
                prop_assert_eq!(h.chunk_id, *id);
                prop_assert!((h.score - score).abs() < 1e-12);
                prop_assert!(h.score.abs() <= 1.0);
            }
        }
    }

    #[test]
    fn search_is_monotone_in_k(store in store_strategy(), query in text_strategy(), k in 1usize..40) {
        let q = hash_embed(&query, DIM);
        let shorter = store.search(&q, k, None).unwrap();
        let longer = store.search(&q, k + 1, None).unwrap();
        prop_assert_eq!(&longer[..shorter.len()], &shorter[..]);
    }

    #[test]
    fn filter_is_sound_and_never_raises_scores(
        store in store_strategy(),
        query in text_strategy(),
        k in 1usize..20,
        filter in filter_strategy().prop_filter("some filter", Option::is_some),
    ) {
        let filter = filter.unwrap();
        let q = hash_embed(&query, DIM);
        let filtered = store.search(&q, k, Some(&filter)).unwrap();
        let unfiltered = store.search(&q, k, None).unwrap();
        for (rank, h) in filtered.iter().enumerate() {
            prop_assert!(filter.matches(&h.chunk.doc_key, h.chunk.kind));
            prop_assert!(unfiltered[rank].score >= h.score);
        }
    }

    #[test]
    fn save_load_preserves_search(store in store_strategy(), queries in prop::collection::vec(text_strategy(), 1..5)) {
        let dir = tempfile::tempdir().unwrap();
        store.save(dir.path()).unwrap();
        let loaded = VectorStore::load(dir.path()).unwrap();
        prop_assert_eq!(loaded.manifest().count, store.manifest().count);
        prop_assert_eq!(loaded.records(), store.records());
        for query in queries {
            let q = hash_embed(&query, DIM);
            prop_assert_eq!(loaded.search(&q, 10, None).unwrap(), store.search(&q, 10, None).unwrap());
        }
    }
}

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

proptest! {
    #[test]
    fn scripted_backend_is_stateless(contents in prop::collection::vec("[A-E]", 1..8), pick in 0usize..8) {
        let requests: Vec<ChatRequest> = (0..contents.len())
            .map(|i| ChatRequest::new("m", vec![ChatMessage::user(format!("question {i}"))]))
            .collect();
        let backend = ScriptedBackend::new(requests.iter().zip(&contents).map(|(r, c)| TranscriptEntry {
            fingerprint: r.fingerprint(),
            content: c.clone(),
        }));
        let r = &requests[pick % requests.len()];
        let first = backend.complete(r).unwrap();
        for other in &requests {
            backend.complete(other).unwrap();
        }
        prop_assert_eq!(backend.complete(r).unwrap(), first);
    }

    #[test]
    fn oracle_backend_is_stateless(i in 0usize..common::SYNTH_QUESTIONS, with_context in any::<bool>()) {
        let fx = common::synthetic_fixture();
        let q = &fx.questions[i];
        let mut messages = Vec::new();
        if with_context {
            messages.push(ChatMessage::system(format!("Document ID {i}: context")));
        }
        messages.push(ChatMessage::user(q.user_message()));
        let request = ChatRequest::new("m", messages);
        let a = oracle_mock_complete(&request, &fx.oracle).unwrap();
        let b = oracle_mock_complete(&request, &fx.oracle).unwrap();
        prop_assert_eq!(&a, &b);
        let letter = Letter::from_char(a.content.chars().next().unwrap()).unwrap();
        let knows = if with_context { i < common::SYNTH_COVERED } else { i < common::SYNTH_PRIOR };
        prop_assert_eq!(letter == q.correct, knows);
    }
}

// ---------------------------------------------------------------------------
// RAG engine
// ---------------------------------------------------------------------------

/// Replies with a fixed text and remembers every request it saw.
struct Recording {
    reply: String,
    seen: Mutex<Vec<ChatRequest>>,
}

impl ChatBackend for Recording {
    fn complete(&self, request: &ChatRequest) -> Result<ChatCompletion, GatewayError> {
        self.seen.lock().unwrap().push(request.clone());
        Ok(ChatCompletion {
            content: self.reply.clone(),
            model_id: request.model_id.clone(),
            usage: Usage::default(),
        })
    }
}

fn engine(store: VectorStore, k: usize, reply: String) -> (RagEngine, Arc<Recording>) {
    let backend = Arc::new(Recording {
        reply,
        seen: Mutex::new(Vec::new()),
    });
    let mut cfg = RagConfig::new(
        "m",
        PromptMode::Rag,
        EmbedderSpec::stub(DIM),
        urobot_core::llm::BackendSpec::ScriptedMock {
            transcript_path: "unused".into(),
        },
    );
    cfg.k = k;
    let embedder = Arc::new(HashEmbedder::new(EmbedderSpec::stub(DIM)));
    let engine = RagEngine::new(&cfg, embedder, backend.clone(), Some(Arc::new(store))).unwrap();
    (engine, backend)
}

fn document_ids(prompt: &str) -> Vec<u64> {
    let re = regex::Regex::new(r"Document ID (\d+):").unwrap();
    re.captures_iter(prompt)
        .map(|c| c[1].parse().unwrap())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn rag_prompt_has_one_block_per_hit(store in store_strategy(), query in text_strategy(), k in 1usize..20) {
        let n = store.len();
        let (engine, backend) = engine(store, k, "A".into());
        let q = urobot_core::mcq::McqQuestion {
            question_id: "q".into(),
            stem: query,
            options: [(Letter::A, "yes".to_string()), (Letter::B, "no".to_string())].into(),
            correct: Letter::A,
        };
        let answer = engine.answer_mcq(&q).unwrap();
        prop_assert_eq!(answer.letter, Some(Letter::A));
        let seen = backend.seen.lock().unwrap();
        let system: String = seen[0].system_text().collect();
        let ids = document_ids(&system);
        prop_assert_eq!(ids.len(), k.min(n));
        prop_assert_eq!(&ids, &answer.retrieved_ids);
    }

    #[test]
    fn chat_citations_are_retrieved_and_verbatim(
        store in store_strategy(),
        query in text_strategy(),
        k in 1usize..10,
        cited in prop::collection::vec(0u64..60, 0..5),
    ) {
        let reply = cited.iter().map(|id| format!("See Document ID {id}.")).collect::<Vec<_>>().join(" ");
        let (engine, _) = engine(store.clone(), k, reply);
        let answer = engine.answer_chat(&query).unwrap();
        prop_assert!(!answer.citations.is_empty());
        let retrieved: BTreeSet<u64> = answer.retrieved.iter().map(|h| h.chunk_id).collect();
        for c in &answer.citations {
            prop_assert!(retrieved.contains(&c.chunk_id));
            let stored = &store.get(c.chunk_id).unwrap().chunk.text;
            prop_assert!(stored.contains(&c.snippet));
        }
        let any_valid = cited.iter().any(|id| retrieved.contains(id));
        prop_assert_eq!(answer.citations_fallback, !any_valid);
    }

    #[test]
    fn answer_mcq_is_deterministic(i in 0usize..common::SYNTH_QUESTIONS) {
        let fx = common::synthetic_fixture();
        let backend = Arc::new(urobot_core::llm::OracleBackend::new(fx.oracle.clone()));
        let embedder = Arc::new(HashEmbedder::new(EmbedderSpec::stub(common::SYNTH_DIM)));
        let cfg = common::oracle_config(PromptMode::Rag, std::path::Path::new("unused"));
        let engine = RagEngine::new(&cfg, embedder, backend, Some(fx.store.clone())).unwrap();
        let q = &fx.questions[i];
        prop_assert_eq!(engine.answer_mcq(q).unwrap(), engine.answer_mcq(q).unwrap());
    }
}

// ---------------------------------------------------------------------------
// Benchmark statistics
// ---------------------------------------------------------------------------

proptest! {
    #[test]
    fn mean_roca_is_grand_mean(cells in matrix_strategy(30, 12)) {
        let total: usize = cells.iter().flatten().map(|&c| c as usize).sum();
        let grand = total as f64 / (cells.len() * cells[0].len()) as f64;
        let s = summarize(&matrix("m", cells), 0.95).unwrap();
        prop_assert!((s.mean - grand).abs() < 1e-12);
        let (lo, hi) = s.ci.unwrap();
        prop_assert!(lo <= s.mean + 1e-15 && s.mean <= hi + 1e-15);
        for r in s.run_rocas.iter().chain([&s.majority_vote_roca]) {
            prop_assert!((0.0..=1.0).contains(r));
        }
    }

    #[test]
    fn kappa_is_one_iff_rows_constant(cells in matrix_strategy(20, 8)) {
        let constant = cells.iter().all(|row| row.iter().all(|&c| c == row[0]));
        let kappa = fleiss_kappa(&matrix("m", cells.clone())).unwrap().kappa;
        prop_assert_eq!((kappa - 1.0).abs() < 1e-12, constant, "kappa {}", kappa);
        prop_assert!((kappa - common::kappa_by_pairs(&cells)).abs() < 1e-12);
    }

    #[test]
    fn identical_runs_make_majority_equal_mean(column in prop::collection::vec(0..=1u8, 1..40), runs in 2usize..12) {
        let cells: Vec<Vec<u8>> = column.iter().map(|&c| vec![c; runs]).collect();
        let s = summarize(&matrix("m", cells), 0.95).unwrap();
        prop_assert!((s.majority_vote_roca - s.mean).abs() < 1e-12);
    }

    #[test]
    fn t_tests_are_antisymmetric(
        (a, b) in (2usize..25, 2usize..10).prop_flat_map(|(q, r)| {
            let m = prop::collection::vec(prop::collection::vec(0..=1u8, r), q);
            (m.clone(), m)
        })
    ) {
        let (ma, mb) = (matrix("a", a), matrix("b", b));
        for (ab, ba) in [
            (paired_t_test(&ma, &mb).unwrap(), paired_t_test(&mb, &ma).unwrap()),
            (unpaired_t_test(&ma, &mb).unwrap(), unpaired_t_test(&mb, &ma).unwrap()),
        ] {
            prop_assert!(ab.t_stat == -ba.t_stat || (ab.t_stat.is_nan() && ba.t_stat.is_nan()));
            prop_assert!(ab.p_value == ba.p_value || (ab.p_value.is_nan() && ba.p_value.is_nan()));
            prop_assert!(ab.degenerate || (0.0..=1.0).contains(&ab.p_value));
        }
    }
}

#[test]
fn cosine_accepts_normalized_vectors() {
    let a = Vector::new(vec![3.0, 4.0]).unwrap();
    let b = Vector::new(vec![4.0, 3.0]).unwrap();
    assert!((cosine(&a, &b).unwrap() - 0.96).abs() < 1e-12);
}
