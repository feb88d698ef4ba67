use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::transcript::TranscriptWriter;
use super::{BackendConfig, BackendMode, Conversation, LlmError, Record, Transcript};

pub const API_KEY_VAR: &str = "SCENOFORGE_API_KEY";

pub trait ChatBackend: Send {
    fn complete(&mut self, conv: &Conversation, temperature: f64) -> Result<String, LlmError>;

    /// Number of completed calls so far.
    fn calls(&self) -> usize;
}

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    api_key: Option<String>,
    max_retries: u32,
    calls: usize,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: AssistantMessage,
}

#[derive(Deserialize)]
struct AssistantMessage {
    content: Option<String>,
}

fn retryable(status: reqwest::StatusCode) -> bool {
    status.is_server_error() || status == reqwest::StatusCode::TOO_MANY_REQUESTS
}

impl HttpBackend {
    pub fn new(endpoint: &str, model: &str, timeout: f64, max_retries: u32) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(timeout))
            .build()
            .map_err(|e| LlmError::Config(format!("cannot build http client: {e}")))?;
        Ok(Self {
            client,
            url: format!("{}/chat/completions", endpoint.trim_end_matches('/')),
            model: model.to_string(),
            api_key: std::env::var(API_KEY_VAR).ok().filter(|k| !k.is_empty()),
            max_retries,
            calls: 0,
        })
    }

    fn send_once(&self, body: &serde_json::Value) -> Result<String, (bool, String)> {
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| (true, e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err((retryable(status), format!("HTTP {status}: {}", crate::xmlutil::truncate(&text, 200))));
        }
        let parsed: ChatResponse = resp.json().map_err(|e| (false, format!("invalid response body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or((false, "response has no choices[0].message.content".to_string()))
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&mut self, conv: &Conversation, temperature: f64) -> Result<String, LlmError> {
        let body = json!({
            "model": self.model,
            "messages": conv.iter().map(|m| json!({"role": m.role.as_str(), "content": m.content})).collect::<Vec<_>>(),
            "temperature": temperature,
        });
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.send_once(&body) {
                Ok(text) => {
                    self.calls += 1;
                    return Ok(text);
                }
                Err((retry, detail)) => {
                    if !retry || attempt > self.max_retries {
                        if retry {
                            return Err(LlmError::Http { attempts: attempt, detail });
                        }
                        return Err(LlmError::BadResponse(detail));
                    }
                    let wait = Duration::from_millis(500 * (1 << (attempt - 1).min(6)));
                    log::warn!("chat request failed ({detail}); retrying in {wait:?}");
                    thread::sleep(wait);
                }
            }
        }
    }

    fn calls(&self) -> usize {
        self.calls
    }
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Serves recorded responses in order and checks that the live request
/// matches the recorded one.
pub struct ReplayBackend {
    path: PathBuf,
    transcript: Transcript,
    next: usize,
}

impl ReplayBackend {
    pub fn open(path: &Path) -> Result<Self, LlmError> {
        Ok(Self { path: path.to_path_buf(), transcript: Transcript::load(path)?, next: 0 })
    }

    pub fn from_transcript(path: &Path, transcript: Transcript) -> Self {
        Self { path: path.to_path_buf(), transcript, next: 0 }
    }

    fn mismatch(&self, message: usize, detail: String) -> LlmError {
        LlmError::TranscriptMismatch { path: self.path.clone(), record: self.next, message, detail }
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&mut self, conv: &Conversation, _temperature: f64) -> Result<String, LlmError> {
        let record = self
            .transcript
            .records
            .get(self.next)
            .ok_or_else(|| LlmError::TranscriptExhausted { path: self.path.clone(), used: self.next })?;
        for i in 0..conv.len().max(record.request.len()) {
            match (conv.get(i), record.request.get(i)) {
                (Some(live), Some(rec)) => {
                    if live.role != rec.role {
                        return Err(self.mismatch(i, format!("role {} vs recorded {}", live.role, rec.role)));
                    }
                    if normalize_ws(&live.content) != normalize_ws(&rec.content) {
                        return Err(self.mismatch(
                            i,
                            format!(
                                "content differs: live {:?} vs recorded {:?}",
                                crate::xmlutil::truncate(&live.content, 80),
                                crate::xmlutil::truncate(&rec.content, 80)
                            ),
                        ));
                    }
                }
                (live, _) => {
                    let detail = if live.is_some() { "live request has extra messages" } else { "live request is shorter" };
                    return Err(self.mismatch(i, detail.to_string()));
                }
            }
        }
        let response = record.response.clone();
        self.next += 1;
        Ok(response)
    }

    fn calls(&self) -> usize {
        self.next
    }
}

/// Forwards to an inner backend and appends every exchange to a transcript.
pub struct RecordBackend {
    inner: Box<dyn ChatBackend>,
    writer: TranscriptWriter,
}

impl RecordBackend {
    pub fn new(inner: Box<dyn ChatBackend>, path: &Path) -> Result<Self, LlmError> {
        Ok(Self { inner, writer: TranscriptWriter::create(path)? })
    }
}

impl ChatBackend for RecordBackend {
    fn complete(&mut self, conv: &Conversation, temperature: f64) -> Result<String, LlmError> {
        let response = self.inner.complete(conv, temperature)?;
        self.writer.append(&Record { request: conv.clone(), response: response.clone() })?;
        Ok(response)
    }

    fn calls(&self) -> usize {
        self.inner.calls()
    }
}

/// Backend for one pipeline stage; `stage_file` is relative to the
/// transcript directory.
pub fn open_backend(cfg: &BackendConfig, stage_file: &Path) -> Result<Box<dyn ChatBackend>, LlmError> {
    cfg.check()?;
    let http = || HttpBackend::new(cfg.endpoint.as_deref().unwrap_or(""), &cfg.model_name, cfg.timeout, cfg.max_retries);
    let transcript_path = || cfg.transcript_dir.as_ref().map(|d| d.join(stage_file)).unwrap_or_default();
    Ok(match cfg.mode {
        BackendMode::Http => Box::new(http()?),
        BackendMode::Replay => Box::new(ReplayBackend::open(&transcript_path())?),
        BackendMode::Record => Box::new(RecordBackend::new(Box::new(http()?), &transcript_path())?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::mock_server::MockServer;
    use crate::llm::{ChatMessage, Role};

    fn conv(text: &str) -> Conversation {
        vec![ChatMessage::new(Role::System, "sys"), ChatMessage::new(Role::User, text)]
    }

    #[test]
    fn replay_serves_in_order() {
        let t = Transcript { records: vec![Record { request: conv("hello  world"), response: "hi".into() }] };
        let mut b = ReplayBackend::from_transcript(Path::new("t"), t.clone());
        assert_eq!(b.complete(&conv("hello\nworld"), 0.2).unwrap(), "hi");
        assert!(matches!(b.complete(&conv("hello world"), 0.2), Err(LlmError::TranscriptExhausted { .. })));

        let mut b = ReplayBackend::from_transcript(Path::new("t"), t);
        match b.complete(&conv("goodbye"), 0.2) {
            Err(LlmError::TranscriptMismatch { message, .. }) => assert_eq!(message, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn http_round_trip_and_record() {
        let server = MockServer::start(|path, body| {
            assert_eq!(path, "/chat/completions");
            let last = body["messages"].as_array()?.last()?["content"].as_str()?.to_string();
            Some(json!({"choices": [{"message": {"role": "assistant", "content": format!("echo: {last}")}}]}))
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let cfg = BackendConfig {
            mode: BackendMode::Record,
            endpoint: Some(server.url()),
            transcript_dir: Some(dir.path().to_path_buf()),
            ..BackendConfig::default()
        };
        let mut b = open_backend(&cfg, Path::new("s/x.transcript")).unwrap();
        assert_eq!(b.complete(&conv("one"), 0.2).unwrap(), "echo: one");
        assert_eq!(b.complete(&conv("two"), 0.2).unwrap(), "echo: two");
        drop(b);
        let replay_cfg = BackendConfig { mode: BackendMode::Replay, endpoint: None, ..cfg };
        let mut r = open_backend(&replay_cfg, Path::new("s/x.transcript")).unwrap();
        assert_eq!(r.complete(&conv("one"), 0.2).unwrap(), "echo: one");
        assert_eq!(r.complete(&conv("two"), 0.2).unwrap(), "echo: two");
    }

    #[test]
    fn http_errors_are_reported() {
        let server = MockServer::start(|_, _| None).unwrap();
        let mut b = HttpBackend::new(&server.url(), "m", 5.0, 1).unwrap();
        let err = b.complete(&conv("x"), 0.2).unwrap_err();
        assert!(matches!(err, LlmError::Http { attempts: 2, .. }), "{err}");
    }

    #[test]
    fn config_requirements() {
        let cfg = BackendConfig { mode: BackendMode::Replay, ..BackendConfig::default() };
        assert!(cfg.check().is_err());
        let cfg = BackendConfig { mode: BackendMode::Http, ..BackendConfig::default() };
        assert!(cfg.check().is_err());
    }
}
