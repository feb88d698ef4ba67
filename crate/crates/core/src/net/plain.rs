//! Plain node/edge files. Parsing is strict: anything outside the supported
//! subset is a diagnostic, never silently dropped.

use std::collections::HashSet;

use crate::diag::{DiagCode, Diagnostic};
use crate::net::{EdgeDecl, NetworkPlan, NodeDecl, NodeKind};
use crate::xmlutil::{check_identifier, fmt2, format_shape, parse_document, parse_shape, push_attr, XmlElement};
use crate::geometry::Point;

const NODE_ATTRS: &[&str] = &["id", "x", "y", "type"];
const EDGE_ATTRS: &[&str] = &["id", "from", "to", "numLanes", "speed", "name", "shape"];

/// Parses a node file and an edge file into a plan, preserving declaration
/// order. All problems found in both documents are reported together.
pub fn parse_plain(node_text: &str, edge_text: &str) -> Result<NetworkPlan, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let nodes = match parse_document(node_text) {
        Ok(root) => parse_nodes(&root, &mut diags),
        Err(d) => {
            diags.push(Diagnostic::format_error("nodes", format!("node file (nodes): {}", d.message)));
            Vec::new()
        }
    };
    let edges = match parse_document(edge_text) {
        Ok(root) => parse_edges(&root, &mut diags),
        Err(d) => {
            diags.push(Diagnostic::format_error("edges", format!("edge file (edges): {}", d.message)));
            Vec::new()
        }
    };
    if diags.is_empty() {
        Ok(NetworkPlan { nodes, edges })
    } else {
        Err(diags)
    }
}

fn check_element(el: &XmlElement, allowed: &[&str], label: &str, diags: &mut Vec<Diagnostic>) {
    for (k, _) in &el.attrs {
        if !allowed.contains(&k.as_str()) {
            diags.push(Diagnostic::new(
                DiagCode::UnknownAttribute,
                k.clone(),
                format!(
                    "{label} has unknown attribute '{k}'; allowed attributes are: {}",
                    allowed.join(", ")
                ),
            ));
        }
    }
    if !el.text.trim().is_empty() {
        diags.push(Diagnostic::format_error(
            el.name.clone(),
            format!("{label} (<{}>) must not contain text", el.name),
        ));
    }
    for child in &el.children {
        diags.push(Diagnostic::format_error(
            child.name.clone(),
            format!("{label} must not contain a <{}> element", child.name),
        ));
    }
}

fn required<'a>(el: &'a XmlElement, attr: &str, label: &str, diags: &mut Vec<Diagnostic>) -> Option<&'a str> {
    let v = el.attr(attr);
    if v.is_none() {
        diags.push(Diagnostic::bad_attribute(attr, format!("{label} is missing required attribute '{attr}'")));
    }
    v
}

fn identifier(value: Option<&str>, attr: &str, label: &str, diags: &mut Vec<Diagnostic>) -> Option<String> {
    let v = value?;
    match check_identifier(v) {
        Ok(()) => Some(v.to_string()),
        Err(msg) => {
            let subject = if v.is_empty() { attr.to_string() } else { v.to_string() };
            diags.push(Diagnostic::bad_attribute(subject, format!("{label}: attribute '{attr}': {msg}")));
            None
        }
    }
}

fn number(value: Option<&str>, attr: &str, label: &str, diags: &mut Vec<Diagnostic>) -> Option<f64> {
    let v = value?;
    match v.trim().parse::<f64>() {
        Ok(x) if x.is_finite() => Some(x),
        _ => {
            diags.push(Diagnostic::bad_attribute(
                attr,
                format!("{label}: attribute '{attr}' value '{v}' is not a finite number"),
            ));
            None
        }
    }
}

fn expect_root(root: &XmlElement, name: &str, diags: &mut Vec<Diagnostic>) -> bool {
    if root.name != name {
        diags.push(Diagnostic::format_error(
            root.name.clone(),
            format!("expected root element <{name}> but found <{}>", root.name),
        ));
        return false;
    }
    if !root.attrs.is_empty() {
        for (k, _) in &root.attrs {
            diags.push(Diagnostic::new(
                DiagCode::UnknownAttribute,
                k.clone(),
                format!("root element <{name}> has unknown attribute '{k}'"),
            ));
        }
    }
    if !root.text.trim().is_empty() {
        diags.push(Diagnostic::format_error(name, format!("<{name}> must not contain text")));
    }
    true
}

fn parse_nodes(root: &XmlElement, diags: &mut Vec<Diagnostic>) -> Vec<NodeDecl> {
    let mut out = Vec::new();
    if !expect_root(root, "nodes", diags) {
        return out;
    }
    let mut seen = HashSet::new();
    for (i, el) in root.children.iter().enumerate() {
        if el.name != "node" {
            diags.push(Diagnostic::format_error(
                el.name.clone(),
                format!("node file may only contain <node> elements, found <{}>", el.name),
            ));
            continue;
        }
        let label = match el.attr("id") {
            Some(id) => format!("node '{id}'"),
            None => format!("node #{}", i + 1),
        };
        let before = diags.len();
        check_element(el, NODE_ATTRS, &label, diags);
        let id = identifier(required(el, "id", &label, diags), "id", &label, diags);
        let x = number(required(el, "x", &label, diags), "x", &label, diags);
        let y = number(required(el, "y", &label, diags), "y", &label, diags);
        let kind = match el.attr("type") {
            None => Some(NodeKind::Priority),
            Some(t) => match t.parse::<NodeKind>() {
                Ok(k) => Some(k),
                Err(msg) => {
                    diags.push(Diagnostic::bad_attribute(t, format!("{label}: {msg}")));
                    None
                }
            },
        };
        if let Some(id) = &id {
            if !seen.insert(id.clone()) {
                diags.push(Diagnostic::new(DiagCode::DuplicateId, id.clone(), format!("node id '{id}' is declared twice")));
            }
        }
        if diags.len() == before {
            if let (Some(id), Some(x), Some(y), Some(kind)) = (id, x, y, kind) {
                out.push(NodeDecl { id, pos: Point::new(x, y), kind });
            }
        }
    }
    out
}

fn parse_edges(root: &XmlElement, diags: &mut Vec<Diagnostic>) -> Vec<EdgeDecl> {
    let mut out = Vec::new();
    if !expect_root(root, "edges", diags) {
        return out;
    }
    let mut seen = HashSet::new();
    for (i, el) in root.children.iter().enumerate() {
        if el.name != "edge" {
            diags.push(Diagnostic::format_error(
                el.name.clone(),
                format!("edge file may only contain <edge> elements, found <{}>", el.name),
            ));
            continue;
        }
        let label = match el.attr("id") {
            Some(id) => format!("edge '{id}'"),
            None => format!("edge #{}", i + 1),
        };
        let before = diags.len();
        check_element(el, EDGE_ATTRS, &label, diags);
        let id = identifier(required(el, "id", &label, diags), "id", &label, diags);
        let from = identifier(required(el, "from", &label, diags), "from", &label, diags);
        let to = identifier(required(el, "to", &label, diags), "to", &label, diags);
        let num_lanes = required(el, "numLanes", &label, diags).and_then(|v| match v.trim().parse::<u32>() {
            Ok(n) if n >= 1 => Some(n),
            _ => {
                diags.push(Diagnostic::bad_attribute(
                    "numLanes",
                    format!("{label}: numLanes '{v}' must be a positive integer"),
                ));
                None
            }
        });
        let speed = number(required(el, "speed", &label, diags), "speed", &label, diags);
        if let Some(s) = speed {
            if s <= 0.0 {
                diags.push(Diagnostic::bad_attribute("speed", format!("{label}: speed {s} must be > 0 (m/s)")));
            }
        }
        let shape = match el.attr("shape") {
            None => Some(None),
            Some(s) => match parse_shape(s) {
                Some(pts) if pts.len() >= 2 => Some(Some(pts)),
                _ => {
                    diags.push(Diagnostic::bad_attribute(
                        "shape",
                        format!("{label}: shape '{s}' must be at least two 'x,y' pairs separated by spaces"),
                    ));
                    None
                }
            },
        };
        if let (Some(f), Some(t)) = (&from, &to) {
            if f == t {
                diags.push(Diagnostic::bad_attribute(
                    id.clone().unwrap_or_else(|| f.clone()),
                    format!("{label} starts and ends at the same node '{f}'"),
                ));
            }
        }
        if let Some(id) = &id {
            if !seen.insert(id.clone()) {
                diags.push(Diagnostic::new(DiagCode::DuplicateId, id.clone(), format!("edge id '{id}' is declared twice")));
            }
        }
        if diags.len() == before {
            if let (Some(id), Some(from), Some(to), Some(num_lanes), Some(speed), Some(shape)) =
                (id, from, to, num_lanes, speed, shape)
            {
                out.push(EdgeDecl { id, from, to, num_lanes, speed, name: el.attr("name").map(str::to_string), shape });
            }
        }
    }
    out
}

/// Canonical serialization: fixed attribute order, two-decimal numbers,
/// four-space indentation, trailing newline.
pub fn serialize_plain(plan: &NetworkPlan) -> (String, String) {
    let mut nodes = String::new();
    if plan.nodes.is_empty() {
        nodes.push_str("<nodes/>\n");
    } else {
        nodes.push_str("<nodes>\n");
        for n in &plan.nodes {
            nodes.push_str("    <node");
            push_attr(&mut nodes, "id", &n.id);
            push_attr(&mut nodes, "x", &fmt2(n.pos.x));
            push_attr(&mut nodes, "y", &fmt2(n.pos.y));
            push_attr(&mut nodes, "type", n.kind.as_str());
            nodes.push_str("/>\n");
        }
        nodes.push_str("</nodes>\n");
    }
    let mut edges = String::new();
    if plan.edges.is_empty() {
        edges.push_str("<edges/>\n");
    } else {
        edges.push_str("<edges>\n");
        for e in &plan.edges {
            edges.push_str("    <edge");
            push_attr(&mut edges, "id", &e.id);
            push_attr(&mut edges, "from", &e.from);
            push_attr(&mut edges, "to", &e.to);
            push_attr(&mut edges, "numLanes", &e.num_lanes.to_string());
            push_attr(&mut edges, "speed", &fmt2(e.speed));
            if let Some(name) = &e.name {
                push_attr(&mut edges, "name", name);
            }
            if let Some(shape) = &e.shape {
                push_attr(&mut edges, "shape", &format_shape(shape));
            }
            edges.push_str("/>\n");
        }
        edges.push_str("</edges>\n");
    }
    (nodes, edges)
}
