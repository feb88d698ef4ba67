//! Length-prefixed request/response log.
//!
//! ```text
//! SCENOFORGE-TRANSCRIPT 1
//! record <n_messages>
//! message <role> <byte_len>
//! <byte_len bytes of content>
//! response <byte_len>
//! <byte_len bytes of content>
//! ```
//!
//! Every content block is followed by a single newline.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{ChatMessage, Conversation, LlmError, Role};

pub const HEADER: &str = "SCENOFORGE-TRANSCRIPT 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub request: Conversation,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Transcript {
    pub records: Vec<Record>,
}

fn push_block(out: &mut String, head: &str, content: &str) {
    out.push_str(head);
    out.push(' ');
    out.push_str(&content.len().to_string());
    out.push('\n');
    out.push_str(content);
    out.push('\n');
}

impl Record {
    pub fn encode(&self) -> String {
        let mut out = format!("record {}\n", self.request.len());
        for m in &self.request {
            push_block(&mut out, &format!("message {}", m.role), &m.content);
        }
        push_block(&mut out, "response", &self.response);
        out
    }
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn err(&self, detail: impl Into<String>) -> LlmError {
        LlmError::TranscriptFormat { path: self.path.to_path_buf(), detail: format!("byte {}: {}", self.pos, detail.into()) }
    }

    fn line(&mut self) -> Result<&'a str, LlmError> {
        let rest = &self.text[self.pos..];
        let end = rest.find('\n').ok_or_else(|| self.err("unterminated line"))?;
        self.pos += end + 1;
        Ok(&rest[..end])
    }

    fn content(&mut self, len: usize) -> Result<&'a str, LlmError> {
        let end = self.pos + len;
        if end + 1 > self.text.len() || !self.text.is_char_boundary(end) || self.text.as_bytes()[end] != b'\n' {
            return Err(self.err(format!("content of {len} bytes is truncated or not newline-terminated")));
        }
        let s = &self.text[self.pos..end];
        self.pos = end + 1;
        Ok(s)
    }

    fn sized(&mut self, keyword: &str) -> Result<(Vec<&'a str>, usize), LlmError> {
        let line = self.line()?;
        let parts: Vec<&str> = line.split(' ').collect();
        if parts.first() != Some(&keyword) || parts.len() < 2 {
            return Err(self.err(format!("expected '{keyword} ...', found '{line}'")));
        }
        let len = parts[parts.len() - 1].parse::<usize>().map_err(|_| self.err(format!("bad length in '{line}'")))?;
        Ok((parts, len))
    }
}

impl Transcript {
    pub fn encode(&self) -> String {
        let mut out = format!("{HEADER}\n");
        for r in &self.records {
            out.push_str(&r.encode());
        }
        out
    }

    pub fn decode(text: &str, path: &Path) -> Result<Self, LlmError> {
        let mut cur = Cursor { text, pos: 0, path };
        if cur.line()? != HEADER {
            return Err(cur.err(format!("missing '{HEADER}' header")));
        }
        let mut records = Vec::new();
        while cur.pos < text.len() {
            let line = cur.line()?;
            let n = line
                .strip_prefix("record ")
                .and_then(|n| n.parse::<usize>().ok())
                .ok_or_else(|| cur.err(format!("expected 'record <n>', found '{line}'")))?;
            let mut request = Vec::with_capacity(n);
            for _ in 0..n {
                let (parts, len) = cur.sized("message")?;
                if parts.len() != 3 {
                    return Err(cur.err("expected 'message <role> <len>'"));
                }
                let role: Role = parts[1].parse().map_err(|e: String| cur.err(e))?;
                request.push(ChatMessage::new(role, cur.content(len)?));
            }
            let (_, len) = cur.sized("response")?;
            let response = cur.content(len)?.to_string();
            records.push(Record { request, response });
        }
        Ok(Self { records })
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = fs::read_to_string(path).map_err(|source| LlmError::Io { path: path.to_path_buf(), source })?;
        Self::decode(&text, path)
    }
}

/// Appends records to a transcript file, creating it with a header first.
pub struct TranscriptWriter {
    path: PathBuf,
}

impl TranscriptWriter {
    pub fn create(path: &Path) -> Result<Self, LlmError> {
        let io = |source| LlmError::Io { path: path.to_path_buf(), source };
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io)?;
        }
        fs::write(path, format!("{HEADER}\n")).map_err(io)?;
        Ok(Self { path: path.to_path_buf() })
    }

    pub fn append(&mut self, record: &Record) -> Result<(), LlmError> {
        let io = |source| LlmError::Io { path: self.path.clone(), source };
        let mut f = fs::OpenOptions::new().append(true).open(&self.path).map_err(io)?;
        f.write_all(record.encode().as_bytes()).map_err(io)?;
        f.flush().map_err(io)
    }
}
