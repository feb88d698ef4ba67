use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::AppError;
use crate::compiler::{CompileOptions, SceneType};
use crate::llm::{AgentTemps, BackendConfig, BackendMode, RepairConfig};
use crate::rag::{Embedder, LocalEmbedder, RemoteEmbedder};

/// Flat key-value configuration file; the keys mirror the CLI flags.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub request: Option<String>,
    pub count: Option<usize>,
    pub scene: Option<String>,
    pub backend: Option<String>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub seed: Option<u64>,
    pub max_attempts: Option<usize>,
    pub rag: Option<bool>,
    pub rag_db: Option<PathBuf>,
    pub embedder: Option<String>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub interpreter: Option<bool>,
    pub feedback: Option<bool>,
    pub templates: Option<PathBuf>,
    pub timeout: Option<f64>,
    pub max_retries: Option<u32>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = fs::read_to_string(path).map_err(|source| AppError::Io { path: path.to_path_buf(), source })?;
        toml::from_str(&text).map_err(|e| AppError::Usage(format!("config file {}: {e}", path.display())))
    }

    /// Values from `over` win.
    pub fn merge(self, over: FileConfig) -> FileConfig {
        macro_rules! pick {
            ($($f:ident),*) => { FileConfig { $($f: over.$f.or(self.$f)),* } };
        }
        pick!(
            request, count, scene, backend, endpoint, model, seed, max_attempts, rag, rag_db, embedder, out, jobs,
            interpreter, feedback, templates, timeout, max_retries
        )
    }
}

/// `http`, `replay:DIR` or `record:DIR`.
pub fn parse_backend_spec(spec: &str) -> Result<(BackendMode, Option<PathBuf>), AppError> {
    let (mode, dir) = match spec.split_once(':') {
        Some((m, d)) => (m, Some(d)),
        None => (spec, None),
    };
    let dir = dir.filter(|d| !d.is_empty()).map(PathBuf::from);
    match (mode, dir) {
        ("http", None) => Ok((BackendMode::Http, None)),
        ("replay", Some(d)) => Ok((BackendMode::Replay, Some(d))),
        ("record", Some(d)) => Ok((BackendMode::Record, Some(d))),
        _ => Err(AppError::Usage(format!("backend must be http, replay:DIR or record:DIR, got '{spec}'"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmbedderChoice {
    Local,
    /// Embedding model served at the chat endpoint.
    Remote(String),
}

impl EmbedderChoice {
    pub fn parse(s: &str) -> Result<Self, AppError> {
        match s.split_once(':') {
            None if s == "local" => Ok(EmbedderChoice::Local),
            Some(("remote", m)) if !m.is_empty() => Ok(EmbedderChoice::Remote(m.to_string())),
            _ => Err(AppError::Usage(format!("embedder must be local or remote:MODEL, got '{s}'"))),
        }
    }

    pub fn build(&self, backend: &BackendConfig) -> Result<Box<dyn Embedder + Send + Sync>, AppError> {
        match self {
            EmbedderChoice::Local => Ok(Box::new(LocalEmbedder::default())),
            EmbedderChoice::Remote(model) => {
                let endpoint = backend
                    .endpoint
                    .as_deref()
                    .ok_or_else(|| AppError::Usage("remote embeddings need an endpoint".into()))?;
                Ok(Box::new(RemoteEmbedder::new(endpoint, model, backend.timeout)?))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RagSettings {
    pub db: PathBuf,
    pub embedder: EmbedderChoice,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub request: String,
    pub count: usize,
    pub scene: Option<SceneType>,
    pub backend: BackendConfig,
    pub rag: Option<RagSettings>,
    pub seed: u64,
    pub repair: RepairConfig,
    pub out_dir: PathBuf,
    pub jobs: usize,
    /// When false the request goes straight to the generators.
    pub interpreter: bool,
    pub temps: AgentTemps,
    pub templates_dir: Option<PathBuf>,
    pub compile: CompileOptions,
}

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1";
pub const DEFAULT_RAG_DB: &str = "rag.jsonl";

impl RunConfig {
    pub fn from_file_config(fc: FileConfig) -> Result<Self, AppError> {
        let request = fc.request.unwrap_or_default();
        let (mode, transcript_dir) = parse_backend_spec(fc.backend.as_deref().unwrap_or("http"))?;
        let mut backend = BackendConfig {
            mode,
            transcript_dir,
            endpoint: Some(fc.endpoint.unwrap_or_else(|| DEFAULT_ENDPOINT.to_string())),
            ..BackendConfig::default()
        };
        if let Some(m) = fc.model {
            backend.model_name = m;
        }
        if let Some(t) = fc.timeout {
            backend.timeout = t;
        }
        if let Some(r) = fc.max_retries {
            backend.max_retries = r;
        }
        let scene = fc
            .scene
            .map(|s| s.parse::<SceneType>().map_err(AppError::Usage))
            .transpose()?;
        let rag = if fc.rag.unwrap_or(false) {
            Some(RagSettings {
                db: fc.rag_db.unwrap_or_else(|| PathBuf::from(DEFAULT_RAG_DB)),
                embedder: EmbedderChoice::parse(fc.embedder.as_deref().unwrap_or("local"))?,
            })
        } else {
            None
        };
        let cfg = RunConfig {
            request,
            count: fc.count.unwrap_or(1),
            scene,
            backend,
            rag,
            seed: fc.seed.unwrap_or(0),
            repair: RepairConfig { max_attempts: fc.max_attempts.unwrap_or(3), feedback: fc.feedback.unwrap_or(true) },
            out_dir: fc.out.unwrap_or_else(|| PathBuf::from("out")),
            jobs: fc.jobs.unwrap_or(1),
            interpreter: fc.interpreter.unwrap_or(true),
            temps: AgentTemps::default(),
            templates_dir: fc.templates,
            compile: CompileOptions::default(),
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), AppError> {
        if self.request.trim().is_empty() {
            return Err(AppError::Usage("a request is required".into()));
        }
        if self.count == 0 {
            return Err(AppError::Usage("count must be at least 1".into()));
        }
        if self.jobs == 0 {
            return Err(AppError::Usage("jobs must be at least 1".into()));
        }
        if self.repair.max_attempts == 0 {
            return Err(AppError::Usage("max-attempts must be at least 1".into()));
        }
        self.backend.check().map_err(|e| AppError::Usage(e.to_string()))?;
        self.compile.check().map_err(AppError::Usage)?;
        Ok(())
    }
}
