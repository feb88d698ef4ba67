//! Line-delimited JSON store: one header line, then one entry per line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::embed::{cosine, Embedder, Embedding};
use super::RagError;
use crate::net::parse_plain;

pub const FORMAT: &str = "scenoforge-rag";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RagEntry {
    pub id: String,
    pub tags: Vec<String>,
    pub description: String,
    pub embedding: Embedding,
    pub node_text: String,
    pub edge_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    dimension: usize,
    embedder: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RagStore {
    path: Option<PathBuf>,
    pub dimension: usize,
    pub embedder: String,
    pub entries: Vec<RagEntry>,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> RagError + '_ {
    move |source| RagError::Io { path: path.to_path_buf(), source }
}

impl RagStore {
    pub fn in_memory(dimension: usize, embedder: &str) -> Self {
        Self { path: None, dimension, embedder: embedder.to_string(), entries: Vec::new() }
    }

    /// Opens the store at `path`, creating an empty one for `embedder` when
    /// the file does not exist yet.
    pub fn open_or_create(path: &Path, embedder: &dyn Embedder, dimension: usize) -> Result<Self, RagError> {
        if path.exists() {
            let store = Self::load(path)?;
            if store.embedder != embedder.name() {
                return Err(RagError::Invalid(format!(
                    "store {} was built with embedder '{}' but '{}' is configured",
                    path.display(),
                    store.embedder,
                    embedder.name()
                )));
            }
            return Ok(store);
        }
        let store = Self { path: Some(path.to_path_buf()), ..Self::in_memory(dimension, &embedder.name()) };
        store.save()?;
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<Self, RagError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let bad = |line: usize, detail: String| RagError::Format { path: path.to_path_buf(), line, detail };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, head) = lines.next().ok_or_else(|| bad(1, "missing header line".into()))?;
        let header: Header = serde_json::from_str(head).map_err(|e| bad(1, e.to_string()))?;
        if header.format != FORMAT || header.version != VERSION {
            return Err(bad(1, format!("unsupported store format {} v{}", header.format, header.version)));
        }
        let mut store = Self { path: None, ..Self::in_memory(header.dimension, &header.embedder) };
        for (i, line) in lines {
            let entry: RagEntry = serde_json::from_str(line).map_err(|e| bad(i + 1, e.to_string()))?;
            store.push_checked(entry).map_err(|e| bad(i + 1, e.to_string()))?;
        }
        store.path = Some(path.to_path_buf());
        Ok(store)
    }

    fn header_line(&self) -> String {
        let h = Header {
            format: FORMAT.to_string(),
            version: VERSION,
            dimension: self.dimension,
            embedder: self.embedder.clone(),
        };
        serde_json::to_string(&h).expect("header serializes")
    }

    /// Full rewrite of the backing file.
    pub fn save(&self) -> Result<(), RagError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let mut out = self.header_line();
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entry serializes"));
            out.push('\n');
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, out).map_err(io_err(&tmp))?;
        fs::rename(&tmp, path).map_err(io_err(path))
    }

    fn push_checked(&mut self, entry: RagEntry) -> Result<(), RagError> {
        if self.entries.iter().any(|e| e.id == entry.id) {
            return Err(RagError::DuplicateId(entry.id));
        }
        if entry.embedding.dimension() != self.dimension {
            return Err(RagError::DimensionMismatch { expected: self.dimension, got: entry.embedding.dimension() });
        }
        if entry.description.trim().is_empty() {
            return Err(RagError::Invalid(format!("entry '{}' has an empty description", entry.id)));
        }
        if let Err(d) = parse_plain(&entry.node_text, &entry.edge_text) {
            return Err(RagError::Invalid(format!(
                "entry '{}' has node/edge texts that do not parse: {}",
                entry.id,
                d.first().map(|d| d.to_string()).unwrap_or_default()
            )));
        }
        self.entries.push(entry);
        Ok(())
    }

    /// Validates, appends and writes the entry through to disk.
    pub fn add_entry(&mut self, entry: RagEntry) -> Result<(), RagError> {
        let line = serde_json::to_string(&entry).expect("entry serializes");
        self.push_checked(entry)?;
        if let Some(path) = &self.path {
            let result = fs::OpenOptions::new()
                .append(true)
                .open(path)
                .and_then(|mut f| f.write_all(format!("{line}\n").as_bytes()));
            if let Err(source) = result {
                self.entries.pop();
                return Err(RagError::Io { path: path.clone(), source });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Top `k` entries by cosine similarity; equal scores keep insertion order.
    pub fn query(&self, embedder: &dyn Embedder, text: &str, k: usize) -> Result<Vec<(&RagEntry, f64)>, RagError> {
        if self.entries.is_empty() {
            return Err(RagError::EmptyStore);
        }
        let q = embedder.embed(text)?;
        self.query_vector(&q, k)
    }

    pub fn query_vector(&self, q: &Embedding, k: usize) -> Result<Vec<(&RagEntry, f64)>, RagError> {
        if self.entries.is_empty() {
            return Err(RagError::EmptyStore);
        }
        let mut scored = self
            .entries
            .iter()
            .map(|e| cosine(q, &e.embedding).map(|s| (e, s)))
            .collect::<Result<Vec<_>, _>>()?;
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        scored.truncate(k.max(1));
        Ok(scored)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rag::LocalEmbedder;

    const NODES: &str = "<nodes>\n    <node id=\"a\" x=\"0.00\" y=\"0.00\" type=\"priority\"/>\n    <node id=\"b\" x=\"100.00\" y=\"0.00\" type=\"priority\"/>\n</nodes>\n";
    const EDGES: &str = "<edges>\n    <edge id=\"e\" from=\"a\" to=\"b\" numLanes=\"1\" speed=\"10.00\"/>\n</edges>\n";

    fn entry(id: &str, description: &str) -> RagEntry {
        RagEntry {
            id: id.into(),
            tags: vec!["t".into()],
            description: description.into(),
            embedding: LocalEmbedder::default().embed(description).unwrap(),
            node_text: NODES.into(),
            edge_text: EDGES.into(),
        }
    }

    #[test]
    fn add_query_and_persist() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rag.jsonl");
        let emb = LocalEmbedder::default();
        let mut store = RagStore::open_or_create(&path, &emb, 1024).unwrap();
        store.add_entry(entry("one", "freeway off-ramp curving right")).unwrap();
        assert_eq!(store.len(), 1);
        assert!(matches!(store.add_entry(entry("one", "again")), Err(RagError::DuplicateId(_))));
        store.add_entry(entry("two", "four-way intersection with two lanes")).unwrap();
        store.add_entry(entry("three", "T-intersection of a main road and a side road")).unwrap();

        let hits = store.query(&emb, "freeway off-ramp curving right", 1).unwrap();
        assert_eq!(hits[0].0.id, "one");
        assert!((hits[0].1 - 1.0).abs() < 1e-9);
        assert_eq!(store.query(&emb, "road", 10).unwrap().len(), 3);

        let loaded = RagStore::load(&path).unwrap();
        assert_eq!(loaded, store);
        let a: Vec<_> = store.query(&emb, "side road", 3).unwrap().iter().map(|(e, s)| (e.id.clone(), *s)).collect();
        let b: Vec<_> = loaded.query(&emb, "side road", 3).unwrap().iter().map(|(e, s)| (e.id.clone(), *s)).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn rejections() {
        let mut store = RagStore::in_memory(1024, "local-trigram-1024");
        assert!(matches!(store.query(&LocalEmbedder::default(), "x", 1), Err(RagError::EmptyStore)));
        let mut e = entry("x", "something");
        e.embedding = Embedding(vec![1.0; 3]);
        assert!(matches!(store.add_entry(e), Err(RagError::DimensionMismatch { .. })));
        let mut e = entry("y", "something");
        e.edge_text = "<edges><edge/></edges>".into();
        assert!(store.add_entry(e).is_err());
        assert!(store.is_empty());
    }

    #[test]
    fn ties_keep_insertion_order() {
        let mut store = RagStore::in_memory(1024, "local-trigram-1024");
        store.add_entry(entry("first", "same words")).unwrap();
        store.add_entry(entry("second", "same words")).unwrap();
        let hits = store.query(&LocalEmbedder::default(), "same words", 2).unwrap();
        assert_eq!(hits[0].0.id, "first");
        assert_eq!(hits[1].0.id, "second");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn words() -> impl Strategy<Value = Vec<String>> {
            prop::collection::vec("[a-z]{2,8}( [a-z]{2,8}){0,5}", 1..8)
        }

        proptest! {
            #[test]
            fn own_description_ranks_first(descs in words()) {
                let emb = LocalEmbedder::default();
                let mut store = RagStore::in_memory(1024, "local-trigram-1024");
                for (i, d) in descs.iter().enumerate() {
                    store.add_entry(entry(&format!("e{i}"), d)).unwrap();
                }
                for d in &descs {
                    let hits = store.query(&emb, d, 1).unwrap();
                    prop_assert_eq!(&hits[0].0.description, d);
                    prop_assert!((hits[0].1 - 1.0).abs() < 1e-9);
                }
            }

            #[test]
            fn ranking_matches_brute_force(descs in words(), q in "[a-z]{2,8}( [a-z]{2,8}){0,3}", k in 1usize..10) {
                let emb = LocalEmbedder::default();
                let mut store = RagStore::in_memory(1024, "local-trigram-1024");
                for (i, d) in descs.iter().enumerate() {
                    store.add_entry(entry(&format!("e{i}"), d)).unwrap();
                }
                let qv = emb.embed(&q).unwrap();
                let mut oracle: Vec<(usize, f64)> = store.entries.iter().enumerate().map(|(i, e)| {
                    let dot: f64 = qv.0.iter().zip(&e.embedding.0).map(|(a, b)| a * b).sum();
                    (i, dot / (qv.norm() * e.embedding.norm()))
                }).collect();
                // stable insertion sort by descending score
                for i in 1..oracle.len() {
                    let mut j = i;
                    while j > 0 && oracle[j - 1].1 < oracle[j].1 {
                        oracle.swap(j - 1, j);
                        j -= 1;
                    }
                }
                oracle.truncate(k);
                let got = store.query(&emb, &q, k).unwrap();
                prop_assert_eq!(got.len(), oracle.len());
                for ((e, s), (i, o)) in got.iter().zip(&oracle) {
                    prop_assert!((s - o).abs() < 1e-9);
                    if (s - o).abs() < 1e-12 {
                        prop_assert_eq!(&e.id, &format!("e{i}"));
                    }
                }
            }
        }
    }
}
