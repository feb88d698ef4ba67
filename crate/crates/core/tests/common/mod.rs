#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use scenoforge::app::{crash_report, run_generate, BatchSummary, FileConfig, RunConfig};
use sha2::{Digest, Sha256};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn rag_db() -> PathBuf {
    fixtures().join("rag/store.jsonl")
}

pub fn crash_text() -> String {
    fs::read_to_string(fixtures().join("responses/crash_report/report.txt")).unwrap()
}

/// The set's run.toml with the given backend spec and output directory.
pub fn set_file_config(set: &str, backend: &str, out: &Path) -> FileConfig {
    let mut fc = FileConfig::load(&fixtures().join("responses").join(set).join("run.toml")).unwrap();
    fc.backend = Some(backend.to_string());
    fc.out = Some(out.to_path_buf());
    fc.jobs = Some(1);
    if let Some(db) = &fc.rag_db {
        fc.rag_db = Some(fixtures().join(db));
    }
    if set == "crash_report" {
        fc.request = Some(crash_text());
    }
    fc
}

pub fn transcripts(set: &str) -> PathBuf {
    fixtures().join("transcripts").join(set)
}

pub fn replay_config(set: &str, out: &Path) -> RunConfig {
    let fc = set_file_config(set, &format!("replay:{}", transcripts(set).display()), out);
    RunConfig::from_file_config(fc).unwrap()
}

pub fn run(set: &str, cfg: &RunConfig) -> BatchSummary {
    if set == "crash_report" {
        crash_report(&crash_text(), cfg).unwrap()
    } else {
        run_generate(cfg).unwrap()
    }
}

pub fn replay(set: &str, out: &Path) -> BatchSummary {
    run(set, &replay_config(set, out))
}

/// sha256 over every file below `dir`, by sorted relative path.
pub fn hash_dir(dir: &Path) -> String {
    let mut files = Vec::new();
    collect(dir, dir, &mut files);
    files.sort();
    let mut h = Sha256::new();
    for rel in files {
        h.update(rel.as_bytes());
        h.update([0]);
        h.update(fs::read(dir.join(&rel)).unwrap());
        h.update([0]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<String>) {
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            collect(root, &p, out);
        } else {
            out.push(p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/"));
        }
    }
}

use scenoforge::geometry::Point;
use scenoforge::net::{EdgeDecl, NetworkPlan, NodeDecl, NodeKind};

pub fn node(id: &str, x: f64, y: f64) -> NodeDecl {
    NodeDecl { id: id.into(), pos: Point::new(x, y), kind: NodeKind::Priority }
}

pub fn edge(id: &str, from: &str, to: &str, lanes: u32, speed: f64) -> EdgeDecl {
    EdgeDecl { id: id.into(), from: from.into(), to: to.into(), num_lanes: lanes, speed, name: None, shape: None }
}

/// Two-way arms of length 100 m from a center node `c` to each named point.
pub fn star(arms: &[(&str, f64, f64)], lanes: u32) -> NetworkPlan {
    let mut plan = NetworkPlan { nodes: vec![node("c", 0.0, 0.0)], edges: Vec::new() };
    for (id, x, y) in arms {
        plan.nodes.push(node(id, *x, *y));
        plan.edges.push(edge(&format!("{id}_in"), id, "c", lanes, 13.89));
        plan.edges.push(edge(&format!("{id}_out"), "c", id, lanes, 13.89));
    }
    plan
}

pub fn t_plan() -> NetworkPlan {
    star(&[("e", 100.0, 0.0), ("w", -100.0, 0.0), ("s", 0.0, -100.0)], 2)
}

pub fn four_way_plan() -> NetworkPlan {
    star(&[("e", 100.0, 0.0), ("w", -100.0, 0.0), ("s", 0.0, -100.0), ("n", 0.0, 100.0)], 1)
}

/// One-way fork: `s_c` splits into `c_l` and `c_r`.
pub fn fork_plan() -> NetworkPlan {
    NetworkPlan {
        nodes: vec![node("s", -100.0, 0.0), node("c", 0.0, 0.0), node("l", 80.0, 60.0), node("r", 80.0, -60.0)],
        edges: vec![edge("s_c", "s", "c", 2, 13.89), edge("c_l", "c", "l", 1, 13.89), edge("c_r", "c", "r", 1, 13.89)],
    }
}
