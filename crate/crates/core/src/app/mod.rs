//! Batch generation runs, crash-report mode, rendering and reports.

mod config;
mod pipeline;
mod render;
mod report;

use std::path::PathBuf;

use thiserror::Error;

use crate::diag::Diagnostic;
use crate::eval::EvalError;
use crate::llm::{LlmError, TemplateError};
use crate::rag::RagError;

pub use config::{parse_backend_spec, EmbedderChoice, FileConfig, RagSettings, RunConfig, DEFAULT_ENDPOINT, DEFAULT_RAG_DB};
pub use pipeline::{
    crash_report, crash_speeds_kmh, crash_vehicle_count, run_generate, BatchSummary, ScenarioSummary, StageAttempts,
};
pub use render::render_svg;
pub use report::{
    challenge_table, conformity_table, diversity_table, evaluate_batch, load_batch, ChallengeReport, ChallengeRow,
    LoadedScenario,
};

#[derive(Debug, Error)]
pub enum AppError {
    /// Bad flags, configuration or inputs the user must fix.
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {}", .diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid { path: PathBuf, diags: Vec<Diagnostic> },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Rag(#[from] RagError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) | AppError::Template(_) => 2,
            AppError::Llm(LlmError::Config(_)) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> AppError {
        let path = path.into();
        move |source| AppError::Io { path, source }
    }
}
