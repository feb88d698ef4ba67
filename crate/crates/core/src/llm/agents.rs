use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::blocks::extract_single_block;
use super::description::{parse_description, parse_verdict, ScenarioDescription, Verdict};
use super::repair::{repair_loop, RepairConfig, RepairError, RepairOutcome};
use super::template::{PromptTemplate, TemplateSet};
use super::{open_backend, BackendConfig, ChatBackend, LlmError};
use crate::compiler::{compile, CompileOptions};
use crate::diag::{DiagCode, Diagnostic};
use crate::net::{parse_plain, parse_trips, CompiledNetwork, NetworkPlan, Route, Trip, VehicleKind};
use crate::routing::expand_trips;
use crate::xmlutil::fmt2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Agent {
    Interpret,
    Net,
    Vehicles,
    Evaluate,
}

impl Agent {
    pub fn name(&self) -> &'static str {
        match self {
            Agent::Interpret => "interpret",
            Agent::Net => "net",
            Agent::Vehicles => "vehicles",
            Agent::Evaluate => "evaluate",
        }
    }

    pub fn transcript_file(&self) -> String {
        format!("{}.transcript", self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentTemps {
    pub interpret: f64,
    pub net: f64,
    pub vehicles: f64,
    pub evaluate: f64,
}

impl Default for AgentTemps {
    fn default() -> Self {
        Self { interpret: 0.7, net: 0.2, vehicles: 0.2, evaluate: 0.2 }
    }
}

type Factory = Box<dyn FnMut(Agent) -> Result<Box<dyn ChatBackend>, LlmError> + Send>;

/// One chat client per pipeline stage, opened on first use.
pub struct StageClients {
    factory: Factory,
    open: HashMap<Agent, Box<dyn ChatBackend>>,
}

impl StageClients {
    pub fn new(factory: impl FnMut(Agent) -> Result<Box<dyn ChatBackend>, LlmError> + Send + 'static) -> Self {
        Self { factory: Box::new(factory), open: HashMap::new() }
    }

    /// Stage transcripts live in `<transcript_dir>/<scenario_dir>/<stage>.transcript`.
    pub fn for_scenario(cfg: &BackendConfig, scenario_dir: &Path) -> Self {
        let cfg = cfg.clone();
        let dir: PathBuf = scenario_dir.to_path_buf();
        Self::new(move |agent| open_backend(&cfg, &dir.join(agent.transcript_file())))
    }

    pub fn get(&mut self, agent: Agent) -> Result<&mut Box<dyn ChatBackend>, LlmError> {
        if !self.open.contains_key(&agent) {
            let b = (self.factory)(agent)?;
            self.open.insert(agent, b);
        }
        Ok(self.open.get_mut(&agent).unwrap())
    }

    pub fn calls(&self, agent: Agent) -> usize {
        self.open.get(&agent).map_or(0, |b| b.calls())
    }
}

/// What the generators work from: an interpreter description, or raw text
/// when the interpreter is bypassed (ablation, crash reports).
#[derive(Debug, Clone, PartialEq)]
pub enum Brief {
    Interpreted(ScenarioDescription),
    Direct { text: String, vehicle_count: Option<usize> },
}

impl Brief {
    pub fn text(&self) -> &str {
        match self {
            Brief::Interpreted(d) => &d.narrative,
            Brief::Direct { text, .. } => text,
        }
    }

    pub fn vehicle_count(&self) -> Option<usize> {
        match self {
            Brief::Interpreted(d) => Some(d.vehicle_count),
            Brief::Direct { vehicle_count, .. } => *vehicle_count,
        }
    }

    pub fn description(&self) -> Option<&ScenarioDescription> {
        match self {
            Brief::Interpreted(d) => Some(d),
            Brief::Direct { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RagExample {
    pub description: String,
    pub node_text: String,
    pub edge_text: String,
}

fn feedback_text(fb: Option<&str>) -> String {
    match fb {
        None => String::new(),
        Some(fb) => format!(
            "Your previous answer had these problems:\n{fb}\nFix every problem and answer again in the same format."
        ),
    }
}

fn ask(
    clients: &mut StageClients,
    agent: Agent,
    template: &PromptTemplate,
    vars: &BTreeMap<&str, String>,
    feedback: Option<&str>,
    temperature: f64,
) -> Result<String, LlmError> {
    let mut vars = vars.clone();
    vars.insert("feedback", feedback_text(feedback));
    let conv = template.render(&vars)?;
    clients.get(agent)?.complete(&conv, temperature)
}

pub fn interpret(
    clients: &mut StageClients,
    templates: &TemplateSet,
    request: &str,
    temperature: f64,
    repair: &RepairConfig,
) -> Result<RepairOutcome<ScenarioDescription>, RepairError> {
    let vars = BTreeMap::from([("request", request.to_string())]);
    repair_loop(
        repair,
        None,
        |fb| ask(clients, Agent::Interpret, &templates.interpret, &vars, fb, temperature),
        |text| parse_description(text).map_err(|d| vec![d]),
    )
}

fn render_examples(examples: &[RagExample]) -> String {
    if examples.is_empty() {
        return "None available.".to_string();
    }
    let mut out = String::new();
    for (i, ex) in examples.iter().enumerate() {
        let _ = write!(
            out,
            "Example {}: {}\n```nodes\n{}\n```\n```edges\n{}\n```\n",
            i + 1,
            ex.description.trim(),
            ex.node_text.trim(),
            ex.edge_text.trim()
        );
    }
    out.trim_end().to_string()
}

/// Parses, validates and compiles a net-generator response.
pub fn check_net_response(
    text: &str,
    opts: &CompileOptions,
    extra: &dyn Fn(&CompiledNetwork) -> Vec<Diagnostic>,
) -> Result<(NetworkPlan, CompiledNetwork), Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let nodes = extract_single_block(text, "nodes").map_err(|d| diags.push(d)).ok();
    let edges = extract_single_block(text, "edges").map_err(|d| diags.push(d)).ok();
    let (Some(nodes), Some(edges)) = (nodes, edges) else {
        return Err(diags);
    };
    let plan = parse_plain(&nodes, &edges)?;
    let net = compile(&plan, opts)?;
    let extra_diags = extra(&net);
    if !extra_diags.is_empty() {
        return Err(extra_diags);
    }
    Ok((plan, net))
}

#[allow(clippy::too_many_arguments)]
pub fn generate_net(
    clients: &mut StageClients,
    templates: &TemplateSet,
    brief: &Brief,
    examples: &[RagExample],
    opts: &CompileOptions,
    temperature: f64,
    repair: &RepairConfig,
    extra: &dyn Fn(&CompiledNetwork) -> Vec<Diagnostic>,
) -> Result<RepairOutcome<(NetworkPlan, CompiledNetwork)>, RepairError> {
    let vars = BTreeMap::from([("description", brief.text().to_string()), ("examples", render_examples(examples))]);
    repair_loop(
        repair,
        None,
        |fb| ask(clients, Agent::Net, &templates.net, &vars, fb, temperature),
        |text| check_net_response(text, opts, extra),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleCheck {
    pub trips: Vec<Trip>,
    pub routes: Vec<Route>,
    pub av_id: String,
}

pub fn check_vehicle_response(
    text: &str,
    net: &CompiledNetwork,
    expected: Option<usize>,
) -> Result<VehicleCheck, Vec<Diagnostic>> {
    let block = extract_single_block(text, "trips").map_err(|d| vec![d])?;
    let trips = parse_trips(&block)?;
    let mut diags = Vec::new();
    let avs: Vec<&Trip> = trips.iter().filter(|t| t.vehicle_kind == VehicleKind::Av).collect();
    if avs.len() != 1 {
        diags.push(Diagnostic::new(
            DiagCode::CountMismatch,
            "AV",
            format!("exactly one trip must have type AV, found {}", avs.len()),
        ));
    }
    if let Some(n) = expected {
        if trips.len() != n {
            diags.push(Diagnostic::new(
                DiagCode::CountMismatch,
                "trips",
                format!("expected {n} vehicles but the trips block has {}", trips.len()),
            ));
        }
    }
    let (routes, failures) = expand_trips(net, &trips);
    for (t, d) in failures {
        diags.push(Diagnostic::new(d.code, d.subject.clone(), format!("vehicle '{}': {}", t.vehicle_id, d.message)));
    }
    if !diags.is_empty() {
        return Err(diags);
    }
    Ok(VehicleCheck { av_id: avs[0].vehicle_id.clone(), trips, routes })
}

#[allow(clippy::too_many_arguments)]
pub fn generate_vehicles(
    clients: &mut StageClients,
    templates: &TemplateSet,
    brief: &Brief,
    net: &CompiledNetwork,
    temperature: f64,
    repair: &RepairConfig,
    initial_feedback: Option<String>,
) -> Result<RepairOutcome<VehicleCheck>, RepairError> {
    let expected = brief.vehicle_count();
    let count = expected.map_or("your choice, between 3 and 10".to_string(), |n| n.to_string());
    let vars = BTreeMap::from([
        ("description", brief.text().to_string()),
        ("net_summary", net_summary(net)),
        ("count", count),
    ]);
    repair_loop(
        repair,
        initial_feedback,
        |fb| ask(clients, Agent::Vehicles, &templates.vehicles, &vars, fb, temperature),
        |text| check_vehicle_response(text, net, expected),
    )
}

pub fn evaluate_scenario(
    clients: &mut StageClients,
    templates: &TemplateSet,
    digest: &str,
    intent: &str,
    temperature: f64,
    repair: &RepairConfig,
) -> Result<RepairOutcome<Verdict>, RepairError> {
    let vars = BTreeMap::from([("request", intent.to_string()), ("description", digest.to_string())]);
    repair_loop(
        repair,
        None,
        |fb| ask(clients, Agent::Evaluate, &templates.evaluate, &vars, fb, temperature),
        |text| parse_verdict(text).map_err(|d| vec![d]),
    )
}

/// Edge ids, geometry and connectivity in a compact listing.
pub fn net_summary(net: &CompiledNetwork) -> String {
    let mut out = String::new();
    for e in &net.edges {
        let next = net.successors(&e.id);
        let _ = writeln!(
            out,
            "edge {}{}: {} -> {}, {} m, {} lane(s), {} m/s, leads to: {}",
            e.id,
            e.name.as_ref().map(|n| format!(" ({n})")).unwrap_or_default(),
            e.from,
            e.to,
            fmt2(e.length()),
            e.num_lanes(),
            fmt2(e.speed()),
            if next.is_empty() { "nothing (network exit)".to_string() } else { next.join(", ") }
        );
    }
    out.trim_end().to_string()
}

/// Routes and departures for the evaluator, at most 2000 characters.
pub fn scenario_digest(scene: &str, routes: &[Route], av_id: &str) -> String {
    let mut out = format!("scene type: {scene}\n");
    for r in routes {
        let kind = if r.vehicle_id == av_id { "AV" } else { "BV" };
        let line = format!("{} {} departs {} s via {}\n", kind, r.vehicle_id, fmt2(r.depart_time), r.edges.join(" > "));
        if out.len() + line.len() > 2000 - 4 {
            out.push_str("...\n");
            break;
        }
        out.push_str(&line);
    }
    out.trim_end().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{Record, ReplayBackend, Transcript};

    const NET_OK: &str = "```nodes\n<nodes>\n<node id=\"a\" x=\"0\" y=\"0\"/>\n<node id=\"b\" x=\"100\" y=\"0\"/>\n<node id=\"c\" x=\"200\" y=\"0\"/>\n</nodes>\n```\n```edges\n<edges>\n<edge id=\"e0\" from=\"a\" to=\"b\" numLanes=\"1\" speed=\"10\"/>\n<edge id=\"e1\" from=\"b\" to=\"c\" numLanes=\"1\" speed=\"10\"/>\n</edges>\n```";

    fn scripted(responses: Vec<&str>) -> StageClients {
        let responses: Vec<String> = responses.into_iter().map(String::from).collect();
        StageClients::new(move |_| {
            // a permissive replay that only serves responses
            Ok(Box::new(Echo { responses: responses.clone().into(), calls: 0 }) as Box<dyn ChatBackend>)
        })
    }

    struct Echo {
        responses: std::collections::VecDeque<String>,
        calls: usize,
    }

    impl ChatBackend for Echo {
        fn complete(&mut self, _: &super::super::Conversation, _: f64) -> Result<String, LlmError> {
            self.calls += 1;
            self.responses.pop_front().ok_or(LlmError::BadResponse("empty".into()))
        }
        fn calls(&self) -> usize {
            self.calls
        }
    }

    fn no_extra(_: &CompiledNetwork) -> Vec<Diagnostic> {
        Vec::new()
    }

    #[test]
    fn net_blocks_must_be_single() {
        let opts = CompileOptions::default();
        assert!(check_net_response(NET_OK, &opts, &no_extra).is_ok());
        let doubled = format!("{NET_OK}\n```nodes\n<nodes/>\n```");
        let err = check_net_response(&doubled, &opts, &no_extra).unwrap_err();
        assert_eq!(err[0].code, DiagCode::FormatError);
    }

    #[test]
    fn examples_are_inlined() {
        let ex = RagExample {
            description: "a road".into(),
            node_text: "<nodes/>".into(),
            edge_text: "<edges>\n<edge id=\"unique_edge_text\" from=\"a\" to=\"b\" numLanes=\"1\" speed=\"1\"/>\n</edges>".into(),
        };
        let t = TemplateSet::builtin();
        let vars = BTreeMap::from([
            ("description", "d".to_string()),
            ("examples", render_examples(std::slice::from_ref(&ex))),
            ("feedback", String::new()),
        ]);
        let conv = t.net.render(&vars).unwrap();
        assert!(conv[1].content.contains(&ex.edge_text));
    }

    #[test]
    fn vehicle_checks() {
        let net = check_net_response(NET_OK, &CompileOptions::default(), &no_extra).unwrap().1;
        let trips = |body: &str| format!("```trips\n<trips>\n{body}\n</trips>\n```");
        let bv = "<trip id=\"b\" type=\"BV\" from=\"e0\" to=\"e1\" depart=\"1\"/>";
        let av = "<trip id=\"a\" type=\"AV\" from=\"e0\" to=\"e1\" depart=\"0\"/>";
        let err = check_vehicle_response(&trips(bv), &net, Some(1)).unwrap_err();
        assert_eq!(err[0].code, DiagCode::CountMismatch);
        let err = check_vehicle_response(&trips(&format!("{av}\n{bv}")), &net, Some(7)).unwrap_err();
        assert!(err[0].message.contains('7') && err[0].message.contains('2'));
        let ok = check_vehicle_response(&trips(&format!("{av}\n{bv}")), &net, Some(2)).unwrap();
        assert_eq!(ok.av_id, "a");
        assert_eq!(ok.routes[0].edges, vec!["e0", "e1"]);
        let back = "<trip id=\"a\" type=\"AV\" from=\"e1\" to=\"e0\" depart=\"0\"/>";
        let err = check_vehicle_response(&trips(back), &net, None).unwrap_err();
        assert_eq!(err[0].code, DiagCode::Unreachable);
    }

    #[test]
    fn interpret_retries_on_format_error() {
        let good = "# Description\nx\n# Reasoning\ny\n```scenario\nscene_type: fork\nlanes: Main=2\nvehicles: 3\n```";
        let mut clients = scripted(vec!["no sections", good]);
        let out = interpret(&mut clients, &TemplateSet::builtin(), "fork", 0.7, &RepairConfig::default()).unwrap();
        assert_eq!(out.log.len(), 2);
        assert_eq!(out.value.scene_type, crate::compiler::SceneType::Fork);
        assert_eq!(clients.calls(Agent::Interpret), 2);
    }

    #[test]
    fn evaluator_format_error() {
        let mut clients = StageClients::new(|_| {
            let t = Transcript { records: Vec::new() };
            Ok(Box::new(ReplayBackend::from_transcript(Path::new("e"), t)) as Box<dyn ChatBackend>)
        });
        let err = evaluate_scenario(&mut clients, &TemplateSet::builtin(), "d", "i", 0.2, &RepairConfig::default());
        assert!(matches!(err, Err(RepairError::Backend { source: LlmError::TranscriptExhausted { .. }, .. })));
        let _ = Record { request: Vec::new(), response: String::new() };
        let mut clients = scripted(vec!["maybe", "maybe", "maybe"]);
        let err = evaluate_scenario(&mut clients, &TemplateSet::builtin(), "d", "i", 0.2, &RepairConfig::default())
            .unwrap_err();
        assert_eq!(err.log()[0].diagnostics[0].code, DiagCode::FormatError);
    }

    #[test]
    fn digest_is_bounded() {
        let routes: Vec<Route> = (0..200)
            .map(|i| Route { vehicle_id: format!("v{i}"), edges: vec!["e0".into(), "e1".into()], depart_time: i as f64 })
            .collect();
        let d = scenario_digest("fork", &routes, "v0");
        assert!(d.len() <= 2000);
        assert!(d.contains("AV v0"));
    }
}
