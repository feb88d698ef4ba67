use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::RagError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn check(self) -> Result<Self, RagError> {
        if self.0.iter().any(|v| !v.is_finite()) {
            return Err(RagError::BadVector("embedding has non-finite entries".into()));
        }
        if self.0.iter().all(|v| *v == 0.0) {
            return Err(RagError::BadVector("embedding is all zeros".into()));
        }
        Ok(self)
    }
}

pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64, RagError> {
    if a.dimension() != b.dimension() {
        return Err(RagError::DimensionMismatch { expected: a.dimension(), got: b.dimension() });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(RagError::BadVector("cosine of a zero vector".into()));
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub trait Embedder {
    fn embed(&self, text: &str) -> Result<Embedding, RagError>;
    /// Recorded in the store header so queries use the same embedder.
    fn name(&self) -> String;
}

/// Feature hashing of character trigrams (FNV-1a, signed buckets).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalEmbedder {
    pub dimension: usize,
}

impl Default for LocalEmbedder {
    fn default() -> Self {
        Self { dimension: 1024 }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Embedder for LocalEmbedder {
    fn embed(&self, text: &str) -> Result<Embedding, RagError> {
        if text.trim().is_empty() {
            return Err(RagError::EmptyText);
        }
        let mut counts: BTreeMap<String, u32> = BTreeMap::new();
        let lower = text.to_lowercase();
        for token in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            let padded: Vec<char> = std::iter::once('^').chain(token.chars()).chain(std::iter::once('$')).collect();
            for gram in padded.windows(3) {
                *counts.entry(gram.iter().collect()).or_default() += 1;
            }
        }
        let mut signed = vec![0.0; self.dimension];
        let mut unsigned = vec![0.0; self.dimension];
        for (gram, n) in &counts {
            // sublinear term frequency keeps boilerplate from dominating
            let weight = 1.0 + (*n as f64).ln();
            let h = fnv1a(gram.as_bytes());
            let bucket = (h % self.dimension as u64) as usize;
            signed[bucket] += if h >> 63 == 0 { weight } else { -weight };
            unsigned[bucket] += weight;
        }
        // signed counts can cancel out completely on very short texts
        let v = if signed.iter().any(|x| *x != 0.0) { signed } else { unsigned };
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(RagError::BadVector(format!("text {:?} hashes to a zero vector", crate::xmlutil::truncate(text, 40))));
        }
        Embedding(v.into_iter().map(|x| x / norm).collect()).check()
    }

    fn name(&self) -> String {
        format!("local-trigram-{}", self.dimension)
    }
}

/// Embeddings over HTTP: POST {endpoint}/embeddings.
pub struct RemoteEmbedder {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    api_key: Option<String>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl RemoteEmbedder {
    pub fn new(endpoint: &str, model: &str, timeout: f64) -> Result<Self, RagError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(timeout))
            .build()
            .map_err(|e| RagError::Remote(e.to_string()))?;
        Ok(Self {
            client,
            url: format!("{}/embeddings", endpoint.trim_end_matches('/')),
            model: model.to_string(),
            api_key: std::env::var(crate::llm::API_KEY_VAR).ok().filter(|k| !k.is_empty()),
        })
    }
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, text: &str) -> Result<Embedding, RagError> {
        if text.trim().is_empty() {
            return Err(RagError::EmptyText);
        }
        let mut req = self.client.post(&self.url).json(&json!({"model": self.model, "input": text}));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| RagError::Remote(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(RagError::Remote(format!("HTTP {}", resp.status())));
        }
        let body: EmbeddingResponse = resp.json().map_err(|e| RagError::Remote(format!("invalid body: {e}")))?;
        let first = body.data.into_iter().next().ok_or_else(|| RagError::Remote("response has no data[0]".into()))?;
        Embedding(first.embedding).check()
    }

    fn name(&self) -> String {
        format!("remote:{}", self.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::mock_server::MockServer;

    #[test]
    fn local_is_deterministic_and_normalized() {
        let e = LocalEmbedder::default();
        let a = e.embed("Freeway off-ramp, curving right").unwrap();
        assert_eq!(a, e.embed("Freeway off-ramp, curving right").unwrap());
        assert!((a.norm() - 1.0).abs() < 1e-9);
        assert_eq!(a.dimension(), 1024);
        assert!(matches!(e.embed("  "), Err(RagError::EmptyText)));
        assert!(e.embed("--- !!").is_err());
        // ^jy and jy$ share a bucket with opposite signs
        assert!((e.embed("jy").unwrap().norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fnv_reference_values() {
        // published FNV-1a 64 test vectors
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn semantic_golden() {
        let e = LocalEmbedder::default();
        let q = e.embed("freeway off-ramp curve").unwrap();
        let near = cosine(&q, &e.embed("highway exit ramp curved").unwrap()).unwrap();
        let far = cosine(&q, &e.embed("four-way signalized intersection").unwrap()).unwrap();
        assert!(near > far, "{near} vs {far}");
    }

    #[test]
    fn cosine_basics() {
        let v = Embedding(vec![0.3, -1.2, 2.0]);
        let neg = Embedding(v.0.iter().map(|x| -x).collect());
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert!((cosine(&v, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(cosine(&Embedding(vec![1.0, 0.0]), &Embedding(vec![0.0, 1.0])).unwrap(), 0.0);
        assert!(cosine(&v, &Embedding(vec![1.0])).is_err());
        assert!(cosine(&v, &Embedding(vec![0.0; 3])).is_err());
    }

    #[test]
    fn remote_wire_format() {
        let server = MockServer::start(|path, body| {
            assert_eq!(path, "/embeddings");
            assert_eq!(body["input"], "hello");
            Some(json!({"data": [{"embedding": [0.0, 3.0, 4.0]}]}))
        })
        .unwrap();
        let e = RemoteEmbedder::new(&server.url(), "m", 5.0).unwrap();
        assert_eq!(e.embed("hello").unwrap().0, vec![0.0, 3.0, 4.0]);
        assert_eq!(e.name(), "remote:m");
    }
}
