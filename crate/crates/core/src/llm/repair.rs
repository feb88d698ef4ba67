use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::LlmError;
use crate::compiler::diagnostics_to_feedback;
use crate::diag::Diagnostic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairConfig {
    pub max_attempts: usize,
    /// When false every attempt is generated without feedback.
    pub feedback: bool,
}

impl Default for RepairConfig {
    fn default() -> Self {
        Self { max_attempts: 3, feedback: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    /// sha256 of the raw response, hex
    pub digest: String,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Error)]
pub enum RepairError {
    #[error("no valid response after {} attempts", log.len())]
    Exhausted { log: Vec<Attempt> },
    #[error("backend failed on attempt {}: {source}", log.len() + 1)]
    Backend { source: LlmError, log: Vec<Attempt> },
}

impl RepairError {
    pub fn log(&self) -> &[Attempt] {
        match self {
            RepairError::Exhausted { log } | RepairError::Backend { log, .. } => log,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RepairOutcome<T> {
    pub value: T,
    pub response: String,
    pub log: Vec<Attempt>,
}

pub fn response_digest(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Generate/check cycle. The diagnostics of a failed attempt become the
/// feedback of the next one. `initial_feedback` seeds attempt 1.
pub fn repair_loop<T>(
    cfg: &RepairConfig,
    initial_feedback: Option<String>,
    mut generate: impl FnMut(Option<&str>) -> Result<String, LlmError>,
    mut check: impl FnMut(&str) -> Result<T, Vec<Diagnostic>>,
) -> Result<RepairOutcome<T>, RepairError> {
    let mut log = Vec::new();
    let mut feedback = initial_feedback.filter(|_| cfg.feedback);
    for _ in 0..cfg.max_attempts.max(1) {
        let response = match generate(feedback.as_deref()) {
            Ok(r) => r,
            Err(source) => return Err(RepairError::Backend { source, log }),
        };
        let digest = response_digest(&response);
        match check(&response) {
            Ok(value) => {
                log.push(Attempt { digest, diagnostics: Vec::new() });
                return Ok(RepairOutcome { value, response, log });
            }
            Err(diags) => {
                if cfg.feedback {
                    feedback = Some(diagnostics_to_feedback(&diags));
                }
                log.push(Attempt { digest, diagnostics: diags });
            }
        }
    }
    Err(RepairError::Exhausted { log })
}
