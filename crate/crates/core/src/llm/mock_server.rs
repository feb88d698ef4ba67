//! Tiny local HTTP server speaking the chat-completions and embeddings wire
//! format. Used by the tests and for recording fixture transcripts offline.

use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use serde_json::{json, Value};

type Handler = dyn Fn(&str, &Value) -> Option<Value> + Send + Sync;

pub struct MockServer {
    addr: String,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

fn read_request(stream: &mut TcpStream) -> std::io::Result<(String, Vec<u8>)> {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let path = line.split_whitespace().nth(1).unwrap_or("/").to_string();
    let mut len = 0usize;
    loop {
        let mut h = String::new();
        reader.read_line(&mut h)?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body)?;
    Ok((path, body))
}

fn serve(mut stream: TcpStream, handler: &Handler) {
    let Ok((path, body)) = read_request(&mut stream) else {
        return;
    };
    let parsed: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    let (status, payload) = match handler(&path, &parsed) {
        Some(v) => ("200 OK", v.to_string()),
        None => ("500 Internal Server Error", json!({"error": "no scripted response"}).to_string()),
    };
    let _ = write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    );
}

impl MockServer {
    /// `handler(path, json_body)` returns the JSON reply, or `None` for a
    /// 500 response.
    pub fn start(handler: impl Fn(&str, &Value) -> Option<Value> + Send + Sync + 'static) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?.to_string();
        let stop = Arc::new(AtomicBool::new(false));
        let handler: Arc<Handler> = Arc::new(handler);
        let flag = stop.clone();
        let thread = thread::spawn(move || {
            for stream in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                if let Ok(s) = stream {
                    let h = handler.clone();
                    thread::spawn(move || serve(s, h.as_ref()));
                }
            }
        });
        Ok(Self { addr, stop, thread: Some(thread) })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(&self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Per-agent FIFO queues of canned chat responses. The agent is recognised
/// by the first line of the system message.
#[derive(Clone, Default)]
pub struct ScriptedChat {
    queues: Arc<Mutex<HashMap<String, VecDeque<String>>>>,
}

impl ScriptedChat {
    pub fn push(&self, first_system_line: &str, response: impl Into<String>) {
        self.queues.lock().unwrap().entry(first_system_line.to_string()).or_default().push_back(response.into());
    }

    pub fn remaining(&self) -> usize {
        self.queues.lock().unwrap().values().map(VecDeque::len).sum()
    }

    pub fn answer(&self, body: &Value) -> Option<Value> {
        let system = body["messages"].as_array()?.first()?["content"].as_str()?;
        let key = system.lines().next().unwrap_or("").trim().to_string();
        let content = self.queues.lock().unwrap().get_mut(&key)?.pop_front()?;
        Some(json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]}))
    }

    pub fn serve(&self) -> std::io::Result<MockServer> {
        let me = self.clone();
        MockServer::start(move |path, body| if path.ends_with("/chat/completions") { me.answer(body) } else { None })
    }
}
