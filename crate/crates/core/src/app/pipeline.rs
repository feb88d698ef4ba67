//! One run: k independent scenario pipelines writing into `out_dir`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::render::render_svg;
use super::report::{conformity_table, diversity_table};
use super::{AppError, RunConfig};
use crate::compiler::{classify_scene, SceneType};
use crate::diag::Diagnostic;
use crate::eval::{conformity_report, diversity_stats, ConformityItem, ConformityReport, DiversityStats, Scenario, SimConfig};
use crate::llm::{
    evaluate_scenario, generate_net, generate_vehicles, interpret, scenario_digest, Attempt, Brief, RagExample,
    RepairConfig, RepairError, StageClients, TemplateSet, Verdict,
};
use crate::net::{
    parse_net, parse_routes, serialize_net, serialize_plain, serialize_routes, serialize_sumocfg, serialize_trips,
    CompiledNetwork, SumoConfig,
};
use crate::rag::{Embedder, RagStore};
use crate::xmlutil::fmt2;

pub const NODES_FILE: &str = "nodes.nod.xml";
pub const EDGES_FILE: &str = "edges.edg.xml";
pub const NET_FILE: &str = "net.net.xml";
pub const TRIPS_FILE: &str = "trips.trips.xml";
pub const ROUTES_FILE: &str = "routes.rou.xml";
pub const SUMOCFG_FILE: &str = "scenario.sumocfg";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageAttempts {
    pub interpret: usize,
    pub net: usize,
    pub vehicles: usize,
    pub evaluate: usize,
    /// Vehicle attempts spent after an evaluator FAIL.
    pub regenerate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub index: usize,
    pub dir: String,
    pub success: bool,
    /// Every generation stage succeeded on its first attempt.
    pub first_pass: bool,
    pub attempts: StageAttempts,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    pub rag_example: Option<String>,
    pub scene_type: Option<SceneType>,
    /// PASS or FAIL; absent when the evaluator did not run or gave no verdict.
    pub verdict: Option<String>,
    pub regenerated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub mode: String,
    pub request: String,
    pub count: usize,
    pub scene_hint: Option<SceneType>,
    pub interpreter: bool,
    pub rag: bool,
    pub max_attempts: usize,
    pub succeeded: usize,
    pub scenarios: Vec<ScenarioSummary>,
    #[serde(skip)]
    pub conformity: Option<ConformityReport>,
    #[serde(skip)]
    pub diversity: Option<DiversityStats>,
}

impl BatchSummary {
    pub fn exit_code(&self) -> i32 {
        if self.succeeded > 0 {
            0
        } else {
            1
        }
    }
}

enum Source {
    Request,
    Crash { vehicles: Option<usize>, speeds_kmh: Vec<f64> },
}

struct Rag {
    store: RagStore,
    embedder: Box<dyn Embedder + Send + Sync>,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    templates: TemplateSet,
    rag: Option<Rag>,
    source: Source,
}

enum Stop {
    Stage { stage: &'static str, message: String },
    Io(AppError),
}

impl From<AppError> for Stop {
    fn from(e: AppError) -> Self {
        Stop::Io(e)
    }
}

struct Worked {
    summary: ScenarioSummary,
    item: ConformityItem,
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), AppError> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(AppError::io(path))
}

fn log_attempts(log: &mut String, stage: &str, attempts: &[Attempt]) {
    for (i, a) in attempts.iter().enumerate() {
        let status = if a.diagnostics.is_empty() { "ok" } else { "rejected" };
        let _ = writeln!(log, "[{stage}] attempt {} sha256={} {status}", i + 1, a.digest);
        for d in &a.diagnostics {
            let _ = writeln!(log, "    {d}");
        }
    }
}

fn repair_failure(stage: &'static str, log: &mut String, count: &mut usize, e: &RepairError) -> Stop {
    log_attempts(log, stage, e.log());
    *count = e.log().len();
    Stop::Stage { stage, message: e.to_string() }
}

/// `"Vehicle 1"`, `"vehicle #2"` ... counted by distinct number.
pub fn crash_vehicle_count(report: &str) -> Option<usize> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?i)\bvehicle\s*#?\s*(\d+)\b").expect("valid regex"));
    let ids: BTreeSet<u64> = re.captures_iter(report).filter_map(|c| c[1].parse().ok()).collect();
    (!ids.is_empty()).then_some(ids.len())
}

/// Distinct speeds stated in km/h, in order of appearance.
pub fn crash_speeds_kmh(report: &str) -> Vec<f64> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?i)(\d+(?:\.\d+)?)\s*(?:km/h|kph|km/hr|kmh)\b").expect("valid regex"));
    let mut out: Vec<f64> = Vec::new();
    for c in re.captures_iter(report) {
        if let Ok(v) = c[1].parse::<f64>() {
            if !out.contains(&v) {
                out.push(v);
            }
        }
    }
    out
}

fn speed_check(speeds_kmh: &[f64], net: &CompiledNetwork) -> Vec<Diagnostic> {
    speeds_kmh
        .iter()
        .filter(|v| !net.edges.iter().flat_map(|e| &e.lanes).any(|l| (l.speed - *v / 3.6).abs() <= 0.01))
        .map(|v| {
            Diagnostic::bad_attribute(
                "speed",
                format!(
                    "the report states {v} km/h but no edge has speed {} m/s; write speed in m/s (km/h divided by 3.6)",
                    fmt2(v / 3.6)
                ),
            )
        })
        .collect()
}

impl Ctx<'_> {
    fn rag_example(&self, query: &str, log: &mut String) -> Option<(String, RagExample)> {
        let rag = self.rag.as_ref()?;
        match rag.store.query(rag.embedder.as_ref(), query, 1) {
            Ok(hits) => {
                let (e, score) = hits.into_iter().next()?;
                let _ = writeln!(log, "rag example: {} (cosine {:.4})", e.id, score);
                let ex = RagExample {
                    description: e.description.clone(),
                    node_text: e.node_text.clone(),
                    edge_text: e.edge_text.clone(),
                };
                Some((e.id.clone(), ex))
            }
            Err(err) => {
                let _ = writeln!(log, "rag example: none ({err})");
                None
            }
        }
    }

    fn run_stages(&self, dir: &Path, s: &mut ScenarioSummary, log: &mut String) -> Result<(Option<Brief>, Scenario), Stop> {
        let cfg = self.cfg;
        let mut clients = StageClients::for_scenario(&cfg.backend, Path::new(&s.dir));
        let brief = match &self.source {
            Source::Crash { vehicles, .. } => Brief::Direct { text: cfg.request.clone(), vehicle_count: *vehicles },
            Source::Request if !cfg.interpreter => Brief::Direct { text: cfg.request.clone(), vehicle_count: None },
            Source::Request => {
                let out = interpret(&mut clients, &self.templates, &cfg.request, cfg.temps.interpret, &cfg.repair)
                    .map_err(|e| repair_failure("interpret", log, &mut s.attempts.interpret, &e))?;
                log_attempts(log, "interpret", &out.log);
                s.attempts.interpret = out.log.len();
                write(dir, "description.txt", &format!("{}\n", out.response.trim_end()))?;
                Brief::Interpreted(out.value)
            }
        };
        if let Brief::Direct { text, .. } = &brief {
            let _ = writeln!(log, "interpreter: bypassed");
            write(dir, "description.txt", &format!("{}\n", text.trim_end()))?;
        }

        let examples: Vec<RagExample> = match self.rag_example(brief.text(), log) {
            Some((id, ex)) => {
                s.rag_example = Some(id);
                vec![ex]
            }
            None => Vec::new(),
        };
        let extra = |net: &CompiledNetwork| match &self.source {
            Source::Crash { speeds_kmh, .. } => speed_check(speeds_kmh, net),
            Source::Request => Vec::new(),
        };
        let net_out = generate_net(
            &mut clients,
            &self.templates,
            &brief,
            &examples,
            &cfg.compile,
            cfg.temps.net,
            &cfg.repair,
            &extra,
        )
        .map_err(|e| repair_failure("net", log, &mut s.attempts.net, &e))?;
        log_attempts(log, "net", &net_out.log);
        s.attempts.net = net_out.log.len();
        let (plan, net) = net_out.value;
        let (node_text, edge_text) = serialize_plain(&plan);
        write(dir, NODES_FILE, &node_text)?;
        write(dir, EDGES_FILE, &edge_text)?;
        write(dir, NET_FILE, &serialize_net(&net))?;
        write(dir, "render.svg", &render_svg(&net, cfg.compile.lane_width))?;
        let scene = classify_scene(&net, &cfg.compile);
        s.scene_type = Some(scene);
        let _ = writeln!(log, "scene type: {scene}");

        let veh_out = generate_vehicles(&mut clients, &self.templates, &brief, &net, cfg.temps.vehicles, &cfg.repair, None)
            .map_err(|e| repair_failure("vehicles", log, &mut s.attempts.vehicles, &e))?;
        log_attempts(log, "vehicles", &veh_out.log);
        s.attempts.vehicles = veh_out.log.len();
        s.first_pass = s.attempts.interpret <= 1 && s.attempts.net == 1 && s.attempts.vehicles == 1;
        let mut vehicles = veh_out.value;

        if matches!(self.source, Source::Request) {
            let digest = scenario_digest(scene.as_str(), &vehicles.routes, &vehicles.av_id);
            match evaluate_scenario(&mut clients, &self.templates, &digest, &cfg.request, cfg.temps.evaluate, &cfg.repair) {
                Ok(out) => {
                    log_attempts(log, "evaluate", &out.log);
                    s.attempts.evaluate = out.log.len();
                    let verdict: Verdict = out.value;
                    s.verdict = Some(if verdict.passed { "PASS" } else { "FAIL" }.to_string());
                    let mut text = format!("{}\n{}\n", s.verdict.as_deref().unwrap_or(""), verdict.reasoning.trim());
                    let remaining = cfg.repair.max_attempts.saturating_sub(s.attempts.vehicles);
                    if !verdict.passed && remaining > 0 {
                        let regen_cfg = RepairConfig { max_attempts: remaining, ..cfg.repair };
                        match generate_vehicles(
                            &mut clients,
                            &self.templates,
                            &brief,
                            &net,
                            cfg.temps.vehicles,
                            &regen_cfg,
                            Some(verdict.reasoning.clone()),
                        ) {
                            Ok(out) => {
                                log_attempts(log, "regenerate", &out.log);
                                s.attempts.regenerate = out.log.len();
                                s.regenerated = true;
                                vehicles = out.value;
                                text.push_str("vehicles regenerated with this feedback\n");
                            }
                            Err(e) => {
                                log_attempts(log, "regenerate", e.log());
                                s.attempts.regenerate = e.log().len();
                                let _ = writeln!(log, "regeneration failed, keeping the first vehicles: {e}");
                                text.push_str("regeneration failed; the first vehicles were kept\n");
                            }
                        }
                    }
                    write(dir, "verdict.txt", &text)?;
                }
                Err(e) => {
                    log_attempts(log, "evaluate", e.log());
                    s.attempts.evaluate = e.log().len();
                    let _ = writeln!(log, "evaluator gave no verdict: {e}");
                    write(dir, "verdict.txt", &format!("UNAVAILABLE\n{e}\n"))?;
                }
            }
        } else {
            write(dir, "verdict.txt", "SKIPPED\nno evaluator in crash-report mode\n")?;
        }

        let routes_text = serialize_routes(&vehicles.routes, Some(&vehicles.av_id));
        write(dir, TRIPS_FILE, &serialize_trips(&vehicles.trips))?;
        write(dir, ROUTES_FILE, &routes_text)?;
        let last_depart = vehicles.routes.iter().map(|r| r.depart_time).fold(0.0, f64::max);
        let sumocfg = SumoConfig {
            net_file: NET_FILE.to_string(),
            route_files: ROUTES_FILE.to_string(),
            begin: 0.0,
            end: (last_depart + SimConfig::default().horizon).ceil(),
        };
        write(dir, SUMOCFG_FILE, &serialize_sumocfg(&sumocfg))?;

        // metrics work from the files as written
        let stored = parse_net(&fs::read_to_string(dir.join(NET_FILE)).map_err(AppError::io(dir.join(NET_FILE)))?)
            .map_err(|diags| AppError::Invalid { path: dir.join(NET_FILE), diags })?;
        let stored_routes =
            parse_routes(&routes_text).map_err(|diags| AppError::Invalid { path: dir.join(ROUTES_FILE), diags })?;
        let scenario = Scenario {
            network: stored.network,
            routes: stored_routes.routes,
            av_id: vehicles.av_id,
            description: brief.description().cloned(),
            request: cfg.request.clone(),
        };
        Ok((Some(brief), scenario))
    }

    fn run_one(&self, index: usize) -> Result<Worked, AppError> {
        let dir_name = format!("scenario_{index}");
        let dir = self.cfg.out_dir.join(&dir_name);
        fs::create_dir_all(&dir).map_err(AppError::io(&dir))?;
        let mut s = ScenarioSummary {
            index,
            dir: dir_name,
            success: false,
            first_pass: false,
            attempts: StageAttempts::default(),
            failed_stage: None,
            error: None,
            rag_example: None,
            scene_type: None,
            verdict: None,
            regenerated: false,
        };
        let mut log = format!("scenario {index}\nrequest: {}\n", self.cfg.request.trim());
        let result = self.run_stages(&dir, &mut s, &mut log);
        let mut item = ConformityItem {
            request: self.cfg.request.clone(),
            scene_hint: self.cfg.scene,
            first_pass: false,
            attempts: 0,
            description: None,
            scenario: None,
        };
        match result {
            Ok((brief, scenario)) => {
                s.success = true;
                let _ = writeln!(log, "result: success");
                item.description = brief.and_then(|b| b.description().cloned());
                item.scenario = Some(scenario);
            }
            Err(Stop::Io(e)) => return Err(e),
            Err(Stop::Stage { stage, message }) => {
                log::warn!("scenario {index}: {stage} stage failed: {message}");
                let _ = writeln!(log, "result: failed at {stage}: {message}");
                s.failed_stage = Some(stage.to_string());
                s.error = Some(message);
                s.first_pass = false;
            }
        }
        item.first_pass = s.first_pass;
        item.attempts = s.attempts.interpret.max(s.attempts.net).max(s.attempts.vehicles);
        write(&dir, "attempts.log", &log)?;
        Ok(Worked { summary: s, item })
    }
}

fn run_batch(cfg: &RunConfig, source: Source, mode: &str) -> Result<BatchSummary, AppError> {
    cfg.check()?;
    let templates = TemplateSet::load(cfg.templates_dir.as_deref())?;
    let rag = match &cfg.rag {
        None => None,
        Some(settings) => {
            let embedder = settings.embedder.build(&cfg.backend)?;
            if !settings.db.exists() {
                return Err(AppError::Usage(format!("RAG store {} does not exist", settings.db.display())));
            }
            let store = RagStore::load(&settings.db)?;
            if store.embedder != embedder.name() {
                return Err(AppError::Usage(format!(
                    "RAG store {} was built with embedder '{}' but '{}' is configured",
                    settings.db.display(),
                    store.embedder,
                    embedder.name()
                )));
            }
            Some(Rag { store, embedder })
        }
    };
    fs::create_dir_all(&cfg.out_dir).map_err(AppError::io(&cfg.out_dir))?;
    let ctx = Ctx { cfg, templates, rag, source };

    let next = AtomicUsize::new(1);
    let results: Mutex<Vec<(usize, Result<Worked, AppError>)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..cfg.jobs.min(cfg.count) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i > cfg.count {
                    break;
                }
                let r = ctx.run_one(i);
                results.lock().expect("no worker panicked").push((i, r));
            });
        }
    });
    let mut results = results.into_inner().expect("no worker panicked");
    results.sort_by_key(|(i, _)| *i);
    let mut summaries = Vec::new();
    let mut items = Vec::new();
    for (_, r) in results {
        let w = r?;
        summaries.push(w.summary);
        items.push(w.item);
    }

    let conformity = conformity_report(&items)?;
    let generated: Vec<Scenario> = items.into_iter().filter_map(|i| i.scenario).collect();
    let diversity = if generated.is_empty() { None } else { Some(diversity_stats(&generated)?) };
    let summary = BatchSummary {
        mode: mode.to_string(),
        request: cfg.request.clone(),
        count: cfg.count,
        scene_hint: cfg.scene,
        interpreter: cfg.interpreter && mode == "generate",
        rag: cfg.rag.is_some(),
        max_attempts: cfg.repair.max_attempts,
        succeeded: summaries.iter().filter(|s| s.success).count(),
        scenarios: summaries,
        conformity: Some(conformity.clone()),
        diversity,
    };
    write(&cfg.out_dir, "summary.json", &pretty_json(&summary))?;
    write(&cfg.out_dir, "conformity.json", &pretty_json(&conformity))?;
    write(&cfg.out_dir, "diversity.json", &pretty_json(&diversity))?;
    let mut report = conformity_table(&conformity);
    report.push('\n');
    report.push_str(&diversity.map(|d| diversity_table(&d)).unwrap_or_else(|| "Diversity: no scenario was generated.\n".into()));
    write(&cfg.out_dir, "report.txt", &report)?;
    Ok(summary)
}

pub(crate) fn pretty_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Generates `cfg.count` scenarios for `cfg.request`.
pub fn run_generate(cfg: &RunConfig) -> Result<BatchSummary, AppError> {
    run_batch(cfg, Source::Request, "generate")
}

/// One scenario straight from a crash report: the report is the brief of the
/// net and vehicle generators, km/h speeds must reappear in m/s, and the
/// vehicle count is the number of vehicles the report enumerates.
pub fn crash_report(report: &str, cfg: &RunConfig) -> Result<BatchSummary, AppError> {
    if report.trim().is_empty() {
        return Err(AppError::Usage("the crash report is empty".into()));
    }
    let cfg = RunConfig { request: report.trim().to_string(), count: 1, interpreter: false, ..cfg.clone() };
    let source = Source::Crash { vehicles: crash_vehicle_count(report), speeds_kmh: crash_speeds_kmh(report) };
    run_batch(&cfg, source, "crash-report")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{compile, testnets::t_plan, CompileOptions};

    #[test]
    fn crash_report_parsing() {
        let r = "Vehicle 1 slowed at the junction. Vehicle 2, at 50 km/h, struck vehicle 1. \
                 Vehicle #3 turned right. The limit is 50 km/h, the side road 30kph.";
        assert_eq!(crash_vehicle_count(r), Some(3));
        assert_eq!(crash_speeds_kmh(r), vec![50.0, 30.0]);
        assert_eq!(crash_vehicle_count("a car hit a tree"), None);
    }

    #[test]
    fn speed_check_accepts_converted_value() {
        let mut plan = t_plan();
        for e in &mut plan.edges {
            e.speed = 13.89;
        }
        let net = compile(&plan, &CompileOptions::default()).unwrap();
        assert!(speed_check(&[50.0], &net).is_empty());
        let d = speed_check(&[60.0], &net);
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("16.67"));
    }

    #[test]
    fn empty_crash_report_is_usage_error() {
        let cfg = RunConfig::from_file_config(crate::app::FileConfig {
            request: Some("x".into()),
            ..Default::default()
        })
        .unwrap();
        let e = crash_report("  \n", &cfg).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }
}
