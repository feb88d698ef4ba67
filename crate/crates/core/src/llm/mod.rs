//! Agent pipeline over a pluggable chat backend: templates, fenced-block
//! extraction, description/verdict parsing and the repair loop.

mod agents;
mod backend;
mod blocks;
mod description;
pub mod mock_server;
mod repair;
mod template;
mod transcript;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use agents::{
    evaluate_scenario, generate_net, generate_vehicles, interpret, net_summary, scenario_digest, Agent, AgentTemps,
    Brief, RagExample, StageClients, VehicleCheck,
};
pub use backend::{open_backend, ChatBackend, HttpBackend, RecordBackend, ReplayBackend, API_KEY_VAR};
pub use blocks::{extract_single_block, extract_tagged_blocks};
pub use description::{parse_description, parse_verdict, ScenarioDescription, Verdict};
pub use repair::{repair_loop, response_digest, Attempt, RepairConfig, RepairError, RepairOutcome};
pub use template::{PromptTemplate, TemplateError, TemplateSet, PLACEHOLDERS};
pub use transcript::{Record, Transcript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

impl FromStr for Role {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "system" => Ok(Role::System),
            "user" => Ok(Role::User),
            "assistant" => Ok(Role::Assistant),
            other => Err(format!("unknown role '{other}'")),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self { role, content: content.into() }
    }
}

pub type Conversation = Vec<ChatMessage>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendMode {
    Http,
    Replay,
    Record,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendConfig {
    pub mode: BackendMode,
    pub endpoint: Option<String>,
    pub model_name: String,
    pub transcript_dir: Option<PathBuf>,
    /// seconds
    pub timeout: f64,
    pub max_retries: u32,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            mode: BackendMode::Http,
            endpoint: None,
            model_name: "gpt-4o".to_string(),
            transcript_dir: None,
            timeout: 120.0,
            max_retries: 3,
        }
    }
}

impl BackendConfig {
    pub fn check(&self) -> Result<(), LlmError> {
        let needs_dir = matches!(self.mode, BackendMode::Replay | BackendMode::Record);
        let needs_endpoint = matches!(self.mode, BackendMode::Http | BackendMode::Record);
        if needs_dir && self.transcript_dir.is_none() {
            return Err(LlmError::Config("replay and record modes need a transcript directory".into()));
        }
        if needs_endpoint && self.endpoint.as_deref().is_none_or(str::is_empty) {
            return Err(LlmError::Config("http and record modes need an endpoint".into()));
        }
        if !(self.timeout > 0.0) {
            return Err(LlmError::Config(format!("timeout must be > 0, got {}", self.timeout)));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("request failed after {attempts} attempts: {detail}")]
    Http { attempts: u32, detail: String },
    #[error("malformed chat response: {0}")]
    BadResponse(String),
    #[error("transcript {path} is exhausted after {used} records")]
    TranscriptExhausted { path: PathBuf, used: usize },
    #[error("transcript {path} record {record}: request differs at message {message}: {detail}")]
    TranscriptMismatch { path: PathBuf, record: usize, message: usize, detail: String },
    #[error("transcript {path} is malformed: {detail}")]
    TranscriptFormat { path: PathBuf, detail: String },
    #[error("template error: {0}")]
    Template(#[from] TemplateError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

pub fn temperature_ok(t: f64) -> bool {
    (0.0..=2.0).contains(&t)
}
