//! Application configuration.
//!
//! Values come from, in increasing priority: built-in defaults, a TOML file,
//! environment variables, command-line flags. Environment variables and
//! flags share one definition per setting (clap's `env`), so every flag has
//! a file key and an environment variable.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use urobot_core::bench::{TestMethod, TiePolicy, DEFAULT_ALPHA, DEFAULT_CONFIDENCE};
use urobot_core::embedding::EmbedderSpec;
use urobot_core::llm::BackendSpec;
use urobot_core::rag::{PromptMode, RagConfig};

use crate::CliError;

pub const CONFIG_ENV: &str = "UROBOT_CONFIG";

/// Starter questions offered by the chat UI.
pub const DEFAULT_PREDEFINED: [&str; 4] = [
    "How common is bladder cancer?",
    "What is the prognosis of renal carcinoma?",
    "How is penile cancer treated?",
    "I have blood in my urine, what could that be?",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    #[serde(default = "default_store_path")]
    pub store_path: PathBuf,
    #[serde(default = "default_rag")]
    pub rag: RagConfig,
    #[serde(default)]
    pub server: ServerConfig,
    #[serde(default)]
    pub bench: BenchDefaults,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub bind_address: String,
    pub port: u16,
    /// Origins allowed to call the API from a browser; empty disables CORS.
    pub cors_origins: Vec<String>,
    /// Requests handled concurrently; further requests wait.
    pub max_in_flight: usize,
    /// Upper bound on the graceful-shutdown drain.
    pub drain_secs: u64,
    /// Largest `k` a chat request may ask for.
    pub max_k: usize,
    pub predefined_questions: Vec<String>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind_address: "127.0.0.1".into(),
            port: 8080,
            cors_origins: Vec::new(),
            max_in_flight: 32,
            drain_secs: 30,
            max_k: 50,
            predefined_questions: DEFAULT_PREDEFINED.iter().map(|q| q.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum KappaCategories {
    /// Correct vs incorrect.
    #[default]
    Binary,
    /// The answer letters plus INVALID.
    Letters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchDefaults {
    pub runs: usize,
    pub alpha: f64,
    /// Bonferroni divisor; defaults to the number of tests performed.
    pub m: Option<usize>,
    pub confidence: f64,
    pub method: TestMethod,
    pub ties: TiePolicy,
    pub kappa: KappaCategories,
    /// Model every other model is tested against; defaults to the first.
    pub reference: Option<String>,
}

impl Default for BenchDefaults {
    fn default() -> Self {
        BenchDefaults {
            runs: 10,
            alpha: DEFAULT_ALPHA,
            m: None,
            confidence: DEFAULT_CONFIDENCE,
            method: TestMethod::default(),
            ties: TiePolicy::default(),
            kappa: KappaCategories::default(),
            reference: None,
        }
    }
}

fn default_store_path() -> PathBuf {
    PathBuf::from("store")
}

/// GPT-4o over an OpenAI-compatible endpoint, with the offline hashing
/// embedder so that ingestion works without credentials.
fn default_rag() -> RagConfig {
    RagConfig::new(
        "gpt-4o-2024-05-13",
        PromptMode::Rag,
        EmbedderSpec::stub(256),
        BackendSpec::http("https://api.openai.com/v1"),
    )
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            store_path: default_store_path(),
            rag: default_rag(),
            server: ServerConfig::default(),
            bench: BenchDefaults::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Rag,
    Baseline,
}

impl From<ModeArg> for PromptMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Rag => PromptMode::Rag,
            ModeArg::Baseline => PromptMode::Baseline,
        }
    }
}

/// Settings shared by all subcommands.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML configuration file.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Vector store directory (file key `store_path`).
    #[arg(long = "store", global = true, env = "UROBOT_STORE_PATH")]
    pub store_path: Option<PathBuf>,
    /// Chat model id (file key `rag.model_id`).
    #[arg(long, global = true, env = "UROBOT_MODEL_ID")]
    pub model_id: Option<String>,
    /// Base URL of an OpenAI-compatible chat API; selects the HTTP backend
    /// (file table `rag.backend`).
    #[arg(long, global = true, env = "UROBOT_LLM_ENDPOINT")]
    pub llm_endpoint: Option<String>,
}

impl AppConfig {
    /// Parses a TOML document.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: AppConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// File (if any) overlaid with the shared flags.
    pub fn load(common: &CommonArgs) -> Result<Self, CliError> {
        let mut cfg = match &common.config {
            Some(path) => Self::from_file(path)?,
            None => AppConfig::default(),
        };
        if let Some(p) = &common.store_path {
            cfg.store_path = p.clone();
        }
        if let Some(m) = &common.model_id {
            cfg.rag.model_id = m.clone();
        }
        if let Some(endpoint) = &common.llm_endpoint {
            cfg.rag.backend = match &cfg.rag.backend {
                BackendSpec::HttpApi {
                    max_in_flight,
                    requests_per_minute,
                    timeout_secs,
                    retry,
                    ..
                } => BackendSpec::HttpApi {
                    endpoint: endpoint.clone(),
                    max_in_flight: *max_in_flight,
                    requests_per_minute: *requests_per_minute,
                    timeout_secs: *timeout_secs,
                    retry: *retry,
                },
                _ => BackendSpec::http(endpoint),
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.rag
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.rag
            .embedder
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let s = &self.server;
        if s.port == 0 {
            return Err(CliError::Config("server.port must be in [1, 65535]".into()));
        }
        if s.max_in_flight == 0 || s.max_k == 0 {
            return Err(CliError::Config(
                "server.max_in_flight and server.max_k must be at least 1".into(),
            ));
        }
        let b = &self.bench;
        if b.runs == 0 {
            return Err(CliError::Config("bench.runs must be at least 1".into()));
        }
        if !(b.alpha > 0.0 && b.alpha < 1.0) || !(b.confidence > 0.0 && b.confidence < 1.0) {
            return Err(CliError::Config(
                "bench.alpha and bench.confidence must lie in (0, 1)".into(),
            ));
        }
        if b.m == Some(0) {
            return Err(CliError::Config("bench.m must be at least 1".into()));
        }
        Ok(())
    }
}

/// One entry of a benchmark models file:
///
/// ```toml
/// [[models]]
/// label = "UroBot-4o"
/// model_id = "gpt-4o-2024-05-13"
/// prompt_mode = "rag"
/// embedder = { provider = "deterministic_stub", model_name = "hash-embed-v1", dim = 256 }
/// backend = { kind = "oracle_mock", fixture_path = "oracle.json" }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub label: String,
    #[serde(flatten)]
    pub rag: RagConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsFile {
    pub models: Vec<ModelEntry>,
}

impl ModelsFile {
    /// Relative fixture and transcript paths resolve against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read models file {}: {e}", path.display()))
        })?;
        let mut file: ModelsFile = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if file.models.is_empty() {
            return Err(CliError::Config(format!(
                "{} lists no models",
                path.display()
            )));
        }
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for m in &mut file.models {
            match &mut m.rag.backend {
                BackendSpec::ScriptedMock { transcript_path: p }
                | BackendSpec::OracleMock { fixture_path: p } => {
                    if p.is_relative() {
                        *p = base.join(&*p);
                    }
                }
                BackendSpec::HttpApi { .. } => {}
            }
            m.rag
                .validate()
                .map_err(|e| CliError::Config(format!("model {:?}: {e}", m.label)))?;
        }
        Ok(file)
    }
}
