use std::fmt;

use serde::{Deserialize, Serialize};

/// Diagnostic category. The set is closed so the repair loop can map each
/// code to a fixed corrective instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DiagCode {
    UnknownNode,
    UnknownEdge,
    UnknownLane,
    DuplicateId,
    BadAttribute,
    UnknownAttribute,
    FormatError,
    Unreachable,
    TooShort,
    CountMismatch,
}

impl DiagCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DiagCode::UnknownNode => "UnknownNode",
            DiagCode::UnknownEdge => "UnknownEdge",
            DiagCode::UnknownLane => "UnknownLane",
            DiagCode::DuplicateId => "DuplicateId",
            DiagCode::BadAttribute => "BadAttribute",
            DiagCode::UnknownAttribute => "UnknownAttribute",
            DiagCode::FormatError => "FormatError",
            DiagCode::Unreachable => "Unreachable",
            DiagCode::TooShort => "TooShort",
            DiagCode::CountMismatch => "CountMismatch",
        }
    }
}

impl fmt::Display for DiagCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A self-contained, human-readable problem report. Messages always contain
/// the subject verbatim so they can be handed to a language model as-is.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: DiagCode,
    pub subject: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(code: DiagCode, subject: impl Into<String>, message: impl Into<String>) -> Self {
        let subject = subject.into();
        let mut message = message.into();
        if !message.contains(&subject) {
            message = format!("{message} ('{subject}')");
        }
        Self { code, subject, message }
    }

    pub fn format_error(subject: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(DiagCode::FormatError, subject, message)
    }

    pub fn bad_attribute(subject: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(DiagCode::BadAttribute, subject, message)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]: {}", self.code, self.subject, self.message)
    }
}

impl std::error::Error for Diagnostic {}

/// Convenience wrapper used as an error type where several diagnostics can
/// be reported at once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostics(pub Vec<Diagnostic>);

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for Diagnostics {}

impl From<Vec<Diagnostic>> for Diagnostics {
    fn from(v: Vec<Diagnostic>) -> Self {
        Diagnostics(v)
    }
}
