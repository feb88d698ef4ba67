//! Retrieval of stored road geometries by description similarity.

mod embed;
mod store;
mod summary;

use std::path::PathBuf;

use thiserror::Error;

use crate::diag::Diagnostic;

pub use embed::{cosine, Embedder, Embedding, LocalEmbedder, RemoteEmbedder};
pub use store::{RagEntry, RagStore};
pub use summary::{compass, ingest_net, ingest_net_with, model_summary, sanitize_id, summarize_network};

#[derive(Debug, Error)]
pub enum RagError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("invalid embedding: {0}")]
    BadVector(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("entry id '{0}' already exists in the store")]
    DuplicateId(String),
    #[error("the store is empty")]
    EmptyStore,
    #[error("{0}")]
    Invalid(String),
    #[error("net text does not parse: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Parse(Vec<Diagnostic>),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {detail}")]
    Format { path: PathBuf, line: usize, detail: String },
    #[error("embedding request failed: {0}")]
    Remote(String),
}
