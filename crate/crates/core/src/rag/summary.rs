use std::fmt::Write;

use super::{Embedder, RagEntry, RagError, RagStore};
use crate::compiler::{classify_scene, junction_roads, reconstruct_plan, CompileOptions, SceneType};
use crate::geometry::{heading_deg, relative_headings};
use crate::llm::{ChatBackend, ChatMessage, LlmError, Role};
use crate::net::{parse_net, serialize_plain, CompiledEdge, CompiledNetwork};

const CURVE_THRESHOLD_DEG: f64 = 15.0;

/// Eight-point compass name of a heading measured counter-clockwise from east.
pub fn compass(heading: f64) -> &'static str {
    const NAMES: [&str; 8] = ["east", "northeast", "north", "northwest", "west", "southwest", "south", "southeast"];
    let i = ((heading.rem_euclid(360.0) + 22.5) / 45.0).floor() as usize % 8;
    NAMES[i]
}

fn layout_phrase(net: &CompiledNetwork, scene: SceneType) -> String {
    match scene {
        SceneType::TIntersection => "a T-intersection".into(),
        SceneType::YIntersection => "a Y-intersection".into(),
        SceneType::FourWay => "a four-way intersection".into(),
        SceneType::Fork => "a fork where one road splits in two".into(),
        SceneType::Merge => "a merge where two roads join".into(),
        SceneType::Ramp => {
            let diverging = net.junctions.iter().any(|j| {
                let roads = junction_roads(&net.edges, &j.id);
                roads.len() == 3
                    && roads.iter().filter(|r| r.incoming).count() == 1
                    && roads.iter().filter(|r| r.outgoing).count() == 2
            });
            if diverging {
                "a freeway off-ramp where an exit lane leaves the main road".into()
            } else {
                "a freeway on-ramp where an entry road joins the main road".into()
            }
        }
        SceneType::General => "a general road network".into(),
    }
}

fn curve_phrase(e: &CompiledEdge) -> String {
    let shape = e.lanes.first().map(|l| l.shape.as_slice()).unwrap_or(&[]);
    let extreme = relative_headings(shape).into_iter().fold(0.0_f64, |m, h| if h.abs() > m.abs() { h } else { m });
    if extreme.abs() <= CURVE_THRESHOLD_DEG {
        "straight".into()
    } else {
        let side = if extreme > 0.0 { "left" } else { "right" };
        format!("curves {side} by {}°", extreme.abs().round())
    }
}

fn segment_line(e: &CompiledEdge) -> String {
    let shape = e.lanes.first().map(|l| l.shape.as_slice()).unwrap_or(&[]);
    let heading = match (shape.first(), shape.last()) {
        (Some(a), Some(b)) if a.distance(b) > 1e-9 => compass(heading_deg(a, b)),
        _ => "undefined",
    };
    let label = match &e.name {
        Some(n) => format!("{} ({n})", e.id),
        None => e.id.clone(),
    };
    let lanes = e.num_lanes();
    format!(
        "- {label}: {} m, {lanes} lane{}, {:.2} m/s ({:.0} km/h), heading {heading}, {}.",
        e.length().round(),
        if lanes == 1 { "" } else { "s" },
        e.speed(),
        e.speed() * 3.6,
        curve_phrase(e)
    )
}

/// Deterministic description of layout, segments and directional flow.
pub fn summarize_network(net: &CompiledNetwork) -> String {
    let scene = classify_scene(net, &CompileOptions::default());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Layout: {} ({}) with {} junctions and {} road segments.",
        layout_phrase(net, scene),
        scene,
        net.junctions.len(),
        net.edges.len()
    );
    out.push_str("Segments:\n");
    for e in &net.edges {
        out.push_str(&segment_line(e));
        out.push('\n');
    }
    out.push_str("Connectivity:\n");
    for e in &net.edges {
        let next = net.successors(&e.id);
        if next.is_empty() {
            let _ = writeln!(out, "- {} ends at {} with no onward connection.", e.id, e.to);
        } else {
            let _ = writeln!(out, "- {} leads to {}.", e.id, next.join(", "));
        }
    }
    out
}

/// Free-text description from a vision-capable chat model, given the facts
/// of `summarize_network` and optionally an SVG rendering.
pub fn model_summary(
    backend: &mut dyn ChatBackend,
    facts: &str,
    svg: Option<&str>,
    temperature: f64,
) -> Result<String, LlmError> {
    let mut user = format!("Road network facts:\n{facts}");
    if let Some(svg) = svg {
        let _ = write!(user, "\nBird's-eye rendering (SVG):\n{svg}");
    }
    let conv = vec![
        ChatMessage::new(
            Role::System,
            "You describe road networks for a scenario database. Cover the general layout, the details of each \
             segment and the directional flow of traffic in one paragraph of plain text.",
        ),
        ChatMessage::new(Role::User, user),
    ];
    backend.complete(&conv, temperature).map(|s| s.trim().to_string())
}

/// Replaces characters that plain node/edge files reject.
pub fn sanitize_id(id: &str) -> String {
    id.chars().map(|c| if c == '#' || c == ':' || c.is_whitespace() { '_' } else { c }).collect()
}

/// Parses a compiled net, describes it and stores it with its plain node/edge
/// texts. The store is unchanged on any error.
pub fn ingest_net<'a>(
    store: &'a mut RagStore,
    embedder: &dyn Embedder,
    id: &str,
    net_text: &str,
    tags: &[String],
) -> Result<&'a RagEntry, RagError> {
    ingest_net_with(store, embedder, id, net_text, tags, &mut |net| Ok(summarize_network(net)))
}

/// As [`ingest_net`], with the description produced by `describe`.
pub fn ingest_net_with<'a>(
    store: &'a mut RagStore,
    embedder: &dyn Embedder,
    id: &str,
    net_text: &str,
    tags: &[String],
    describe: &mut dyn FnMut(&CompiledNetwork) -> Result<String, RagError>,
) -> Result<&'a RagEntry, RagError> {
    let parsed = parse_net(net_text).map_err(RagError::Parse)?;
    let net = parsed.network;
    let description = describe(&net)?;
    let mut plan = reconstruct_plan(&net, CompileOptions::default().lane_width);
    for n in &mut plan.nodes {
        n.id = sanitize_id(&n.id);
    }
    for e in &mut plan.edges {
        e.id = sanitize_id(&e.id);
        e.from = sanitize_id(&e.from);
        e.to = sanitize_id(&e.to);
    }
    let (node_text, edge_text) = serialize_plain(&plan);
    let embedding = embedder.embed(&description)?;
    store.add_entry(RagEntry {
        id: id.to_string(),
        tags: tags.to_vec(),
        description,
        embedding,
        node_text,
        edge_text,
    })?;
    Ok(store.entries.last().expect("entry was just added"))
}
