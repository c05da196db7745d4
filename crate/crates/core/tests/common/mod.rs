//! Independent oracles and shared fixtures for the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use urobot_core::corpus::{Chunk, ChunkKind};
use urobot_core::embedding::{hash_embed, EmbedderSpec, Vector};
use urobot_core::llm::{BackendSpec, OracleFixture};
use urobot_core::mcq::{Letter, McqQuestion};
use urobot_core::rag::{PromptMode, RagConfig};
use urobot_core::store::{ChunkFilter, VectorRecord, VectorStore};

// ---------------------------------------------------------------------------
// Retrieval oracle
// ---------------------------------------------------------------------------

fn dot_cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Scores every record, fully sorts by (score desc, id asc), keeps k.
pub fn brute_force_top_k(
    records: &[VectorRecord],
    query: &Vector,
    k: usize,
    filter: Option<&ChunkFilter>,
) -> Vec<(u64, f64)> {
    let mut all: Vec<(u64, f64)> = records
        .iter()
        .filter(|r| filter.is_none_or(|f| f.matches(&r.chunk.doc_key, r.chunk.kind)))
        .map(|r| {
            (
                r.chunk.chunk_id,
                dot_cosine(query.values(), r.vector.values()),
            )
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

pub fn record(id: u64, doc_key: &str, kind: ChunkKind, text: &str, dim: usize) -> VectorRecord {
    let mut chunk = Chunk::new(doc_key, 1, kind, text.to_string());
    chunk.chunk_id = id;
    VectorRecord {
        chunk,
        vector: hash_embed(text, dim),
    }
}

// ---------------------------------------------------------------------------
// Fleiss' kappa oracle: agreement counted pair by pair
// ---------------------------------------------------------------------------

/// κ for a Q×R binary matrix with raters as columns. Observed agreement is
/// the fraction of ordered rater pairs (i ≠ j) that agree on an item;
/// chance agreement uses the pooled category proportions.
pub fn kappa_by_pairs(cells: &[Vec<u8>]) -> f64 {
    let q = cells.len();
    let r = cells[0].len();
    let mut agreeing_pairs = 0usize;
    for row in cells {
        for i in 0..r {
            for j in 0..r {
                if i != j && row[i] == row[j] {
                    agreeing_pairs += 1;
                }
            }
        }
    }
    let p_obs = agreeing_pairs as f64 / (q * r * (r - 1)) as f64;
    let ones: usize = cells.iter().flatten().filter(|&&c| c == 1).count();
    let p1 = ones as f64 / (q * r) as f64;
    let p0 = 1.0 - p1;
    let p_exp = p1 * p1 + p0 * p0;
    if p_exp == 1.0 {
        return 1.0;
    }
    (p_obs - p_exp) / (1.0 - p_exp)
}

// ---------------------------------------------------------------------------
// Student-t tail oracle: adaptive Gauss-Legendre quadrature of the density
// kernel, no special functions involved
// ---------------------------------------------------------------------------

/// Nodes and weights on [-1, 1], found by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            let nf = n as f64;
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

struct Quadrature {
    rule: Vec<(f64, f64)>,
}

impl Quadrature {
    fn new() -> Self {
        Quadrature {
            rule: gauss_legendre(20),
        }
    }

    fn panel(&self, f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        self.rule
            .iter()
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    fn adaptive(
        &self,
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        whole: f64,
        floor: f64,
        depth: u32,
    ) -> f64 {
        let mid = 0.5 * (a + b);
        let left = self.panel(f, a, mid);
        let right = self.panel(f, mid, b);
        let both = left + right;
        if depth == 0 || (both - whole).abs() <= (1e-14 * both.abs()).max(floor) {
            return both;
        }
        self.adaptive(f, a, mid, left, floor, depth - 1)
            + self.adaptive(f, mid, b, right, floor, depth - 1)
    }

    /// ∫_a^∞ g(x) dx through x = a + u/(1-u).
    fn tail(&self, g: &dyn Fn(f64) -> f64, a: f64) -> f64 {
        let h = |u: f64| {
            if u >= 1.0 {
                return 0.0;
            }
            let w = 1.0 - u;
            g(a + u / w) / (w * w)
        };
        let panels = 32;
        let coarse: Vec<f64> = (0..panels)
            .map(|i| self.panel(&h, i as f64 / panels as f64, (i + 1) as f64 / panels as f64))
            .collect();
        let total: f64 = coarse.iter().sum();
        let floor = 1e-17 * total;
        (0..panels)
            .map(|i| {
                let (lo, hi) = (i as f64 / panels as f64, (i + 1) as f64 / panels as f64);
                self.adaptive(&h, lo, hi, coarse[i], floor, 40)
            })
            .sum()
    }
}

/// Two-sided p-value P(|T| ≥ |t|) as a ratio of two integrals of the
/// unnormalised density (1 + x²/ν)^(-(ν+1)/2).
pub struct TTailOracle {
    quad: Quadrature,
}

impl Default for TTailOracle {
    fn default() -> Self {
        TTailOracle {
            quad: Quadrature::new(),
        }
    }
}

impl TTailOracle {
    pub fn half_mass(&self, df: f64) -> f64 {
        let g = move |x: f64| (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
        self.quad.tail(&g, 0.0)
    }

    pub fn two_sided_p_with(&self, t: f64, df: f64, half_mass: f64) -> f64 {
        let g = move |x: f64| (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
        self.quad.tail(&g, t.abs()) / half_mass
    }

    pub fn two_sided_p(&self, t: f64, df: f64) -> f64 {
        self.two_sided_p_with(t, df, self.half_mass(df))
    }
}

// ---------------------------------------------------------------------------
// Published run data
// ---------------------------------------------------------------------------

pub struct PublishedModel {
    pub label: &'static str,
    pub run_rocas: [f64; 10],
    pub mean_roca: f64,
    pub ci: (&'static str, &'static str),
    pub majority_vote: f64,
}

pub const PUBLISHED: [PublishedModel; 7] = [
    PublishedModel {
        label: "Uro_Chat",
        run_rocas: [
            0.55, 0.565, 0.53, 0.55, 0.545, 0.53, 0.545, 0.535, 0.565, 0.55,
        ],
        mean_roca: 0.547,
        ci: ("0.538", "0.555"),
        majority_vote: 0.57,
    },
    PublishedModel {
        label: "GPT-3.5",
        run_rocas: [
            0.495, 0.48, 0.495, 0.495, 0.49, 0.505, 0.495, 0.51, 0.485, 0.47,
        ],
        mean_roca: 0.492,
        ci: ("0.484", "0.500"),
        majority_vote: 0.5,
    },
    PublishedModel {
        label: "GPT-4",
        run_rocas: [
            0.72, 0.72, 0.72, 0.73, 0.725, 0.715, 0.715, 0.72, 0.715, 0.71,
        ],
        mean_roca: 0.719,
        ci: ("0.715", "0.723"),
        majority_vote: 0.72,
    },
    PublishedModel {
        label: "UroBot-3.5",
        run_rocas: [
            0.73, 0.735, 0.72, 0.725, 0.72, 0.72, 0.715, 0.73, 0.72, 0.71,
        ],
        mean_roca: 0.722,
        ci: ("0.717", "0.728"),
        majority_vote: 0.715,
    },
    PublishedModel {
        label: "UroBot-4",
        run_rocas: [
            0.865, 0.87, 0.865, 0.865, 0.865, 0.87, 0.86, 0.86, 0.855, 0.86,
        ],
        mean_roca: 0.863,
        ci: ("0.860", "0.867"),
        majority_vote: 0.865,
    },
    PublishedModel {
        label: "GPT-4o",
        run_rocas: [
            0.78, 0.77, 0.775, 0.79, 0.775, 0.77, 0.775, 0.78, 0.765, 0.78,
        ],
        mean_roca: 0.776,
        ci: ("0.771", "0.781"),
        majority_vote: 0.78,
    },
    PublishedModel {
        label: "UroBot-4o",
        run_rocas: [
            0.89, 0.885, 0.885, 0.88, 0.88, 0.89, 0.885, 0.88, 0.88, 0.88,
        ],
        mean_roca: 0.883,
        ci: ("0.881", "0.886"),
        majority_vote: 0.885,
    },
];

pub const PUBLISHED_QUESTIONS: usize = 200;

/// A 200 × R matrix whose column sums give `run_rocas` and whose strict
/// per-row majority count gives `majority_vote`.
///
/// The first M = majority·200 rows start all-correct and the rest
/// all-incorrect; each column is then adjusted by flipping cells round-robin,
/// never letting a majority row fall below R/2 + 1 ones nor a minority row
/// rise above R/2.
pub fn matrix_with_majority(run_rocas: &[f64], majority_vote: f64) -> Vec<Vec<u8>> {
    let q = PUBLISHED_QUESTIONS;
    let r = run_rocas.len();
    let m = (majority_vote * q as f64).round() as usize;
    let mut cells: Vec<Vec<u8>> = (0..q).map(|i| vec![u8::from(i < m); r]).collect();
    let mut add_ptr = m;
    let mut remove_ptr = 0usize;
    for (col, roca) in run_rocas.iter().enumerate() {
        let target = (roca * q as f64).round() as usize;
        if target > m {
            let mut need = target - m;
            let mut scanned = 0;
            while need > 0 {
                assert!(scanned < q - m, "not enough minority capacity");
                let row = &mut cells[add_ptr];
                if row.iter().map(|&c| c as usize).sum::<usize>() < r / 2 {
                    row[col] = 1;
                    need -= 1;
                }
                add_ptr = if add_ptr + 1 == q { m } else { add_ptr + 1 };
                scanned += 1;
            }
        } else {
            let mut need = m - target;
            let mut scanned = 0;
            while need > 0 {
                assert!(scanned < m, "not enough majority capacity");
                let row = &mut cells[remove_ptr];
                if row.iter().map(|&c| c as usize).sum::<usize>() > r / 2 + 1 {
                    row[col] = 0;
                    need -= 1;
                }
                remove_ptr = (remove_ptr + 1) % m;
                scanned += 1;
            }
        }
    }
    cells
}

pub fn question_ids(n: usize) -> Vec<String> {
    (1..=n).map(|i| i.to_string()).collect()
}

// ---------------------------------------------------------------------------
// Synthetic end-to-end fixture
// ---------------------------------------------------------------------------

pub const SYNTH_DIM: usize = 256;
pub const SYNTH_QUESTIONS: usize = 20;
pub const SYNTH_COVERED: usize = 18;
pub const SYNTH_PRIOR: usize = 9;

pub struct SyntheticFixture {
    pub questions: Vec<McqQuestion>,
    pub store: Arc<VectorStore>,
    pub oracle: OracleFixture,
}

fn topic(i: usize) -> String {
    format!("topic{i:02}alpha topic{i:02}beta topic{i:02}gamma")
}

/// 20 questions, one dedicated chunk per question plus 30 distractors.
/// Chunks for the first 18 questions answer them; the first 9 questions are
/// also answerable without context.
pub fn synthetic_fixture() -> SyntheticFixture {
    let letters = [Letter::A, Letter::B, Letter::C, Letter::D];
    let questions: Vec<McqQuestion> = (0..SYNTH_QUESTIONS)
        .map(|i| McqQuestion {
            question_id: format!("q{i:02}"),
            stem: format!(
                "{} Which statement about {} is correct?",
                OracleFixture::marker(&format!("q{i:02}")),
                topic(i)
            ),
            options: letters
                .iter()
                .map(|l| {
                    (
                        *l,
                        format!("statement {}", l.as_char().to_ascii_lowercase()),
                    )
                })
                .collect(),
            correct: letters[i % 4],
        })
        .collect();

    let mut records = Vec::new();
    for i in 0..SYNTH_QUESTIONS {
        let text = format!(
            "Recommendation on {t}. The panel reviewed {t} in detail.",
            t = topic(i)
        );
        records.push(record(
            i as u64,
            &format!("doc{}", i % 4),
            ChunkKind::Paragraph,
            &text,
            SYNTH_DIM,
        ));
    }
    for j in 0..30 {
        let text =
            format!("Unrelated background passage number filler{j} about epidemiology filler{j}x.");
        records.push(record(
            (SYNTH_QUESTIONS + j) as u64,
            "doc9",
            ChunkKind::Paragraph,
            &text,
            SYNTH_DIM,
        ));
    }
    let mut store = VectorStore::new("synthetic", EmbedderSpec::stub(SYNTH_DIM));
    store.upsert(records).unwrap();

    let oracle = OracleFixture {
        answer_key: questions
            .iter()
            .map(|q| (q.question_id.clone(), q.correct))
            .collect(),
        knowledge: (0..SYNTH_COVERED)
            .map(|i| (i as u64, BTreeSet::from([format!("q{i:02}")])))
            .collect::<BTreeMap<_, _>>(),
        prior_knowledge: (0..SYNTH_PRIOR).map(|i| format!("q{i:02}")).collect(),
    };
    SyntheticFixture {
        questions,
        store: Arc::new(store),
        oracle,
    }
}

pub fn oracle_config(mode: PromptMode, fixture_path: &std::path::Path) -> RagConfig {
    RagConfig::new(
        "oracle-model",
        mode,
        EmbedderSpec::stub(SYNTH_DIM),
        BackendSpec::OracleMock {
            fixture_path: fixture_path.to_path_buf(),
        },
    )
}
