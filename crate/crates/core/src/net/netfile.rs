//! Compiled net files. Reading is lenient so that nets exported by other
//! tools can be ingested: content outside the supported subset is skipped and
//! reported as a warning. Referential errors are still hard failures.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::diag::{DiagCode, Diagnostic};
use crate::geometry::polyline_length;
use crate::net::{check_connection, CompiledEdge, CompiledNetwork, Connection, Direction, Junction, Lane, NodeKind};
use crate::xmlutil::{fmt2, format_shape, parse_document, parse_shape, push_attr, XmlElement};

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedNet {
    pub network: CompiledNetwork,
    pub warnings: Vec<String>,
}

#[derive(Default)]
struct Warnings(BTreeMap<String, usize>);

impl Warnings {
    fn add(&mut self, w: impl Into<String>) {
        *self.0.entry(w.into()).or_default() += 1;
    }

    fn into_vec(self) -> Vec<String> {
        self.0
            .into_iter()
            .map(|(w, n)| if n > 1 { format!("{w} (x{n})") } else { w })
            .collect()
    }
}

const EDGE_ATTRS: &[&str] = &["id", "from", "to", "name"];
const LANE_ATTRS: &[&str] = &["id", "index", "speed", "length", "shape"];
const JUNCTION_ATTRS: &[&str] = &["id", "type", "x", "y", "incLanes", "shape"];
const CONNECTION_ATTRS: &[&str] = &["from", "to", "fromLane", "toLane", "dir"];

fn warn_unknown_attrs(el: &XmlElement, allowed: &[&str], w: &mut Warnings) {
    for (k, _) in &el.attrs {
        if !allowed.contains(&k.as_str()) {
            w.add(format!("ignored attribute '{k}' on <{}>", el.name));
        }
    }
}

fn req<'a>(el: &'a XmlElement, attr: &str, what: &str, diags: &mut Vec<Diagnostic>) -> Option<&'a str> {
    let v = el.attr(attr);
    if v.is_none() {
        diags.push(Diagnostic::bad_attribute(attr, format!("{what} is missing required attribute '{attr}'")));
    }
    v
}

fn num(v: Option<&str>, attr: &str, what: &str, diags: &mut Vec<Diagnostic>) -> Option<f64> {
    let v = v?;
    match v.trim().parse::<f64>() {
        Ok(x) if x.is_finite() => Some(x),
        _ => {
            diags.push(Diagnostic::bad_attribute(attr, format!("{what}: '{attr}' value '{v}' is not a number")));
            None
        }
    }
}

fn junction_kind(t: &str, w: &mut Warnings) -> NodeKind {
    match t {
        "priority" => NodeKind::Priority,
        "traffic_light" => NodeKind::TrafficLight,
        "unregulated" => NodeKind::Unregulated,
        "traffic_light_unregulated" | "traffic_light_right_on_red" => {
            w.add(format!("junction type '{t}' read as traffic_light"));
            NodeKind::TrafficLight
        }
        other => {
            w.add(format!("junction type '{other}' read as priority"));
            NodeKind::Priority
        }
    }
}

fn direction(d: Option<&str>, w: &mut Warnings) -> Direction {
    match d {
        Some("s") => Direction::Straight,
        Some("l") => Direction::Left,
        Some("r") => Direction::Right,
        Some("t") => Direction::Turn,
        Some("L") => {
            w.add("connection dir 'L' read as 'l'");
            Direction::Left
        }
        Some("R") => {
            w.add("connection dir 'R' read as 'r'");
            Direction::Right
        }
        Some(other) => {
            w.add(format!("connection dir '{other}' read as 's'"));
            Direction::Straight
        }
        None => {
            w.add("connection without dir read as 's'");
            Direction::Straight
        }
    }
}

fn parse_edge(el: &XmlElement, w: &mut Warnings, diags: &mut Vec<Diagnostic>) -> Option<CompiledEdge> {
    warn_unknown_attrs(el, EDGE_ATTRS, w);
    let label = format!("edge '{}'", el.attr("id").unwrap_or("?"));
    let id = req(el, "id", &label, diags)?;
    let from = req(el, "from", &label, diags);
    let to = req(el, "to", &label, diags);
    let mut lanes = Vec::new();
    for child in &el.children {
        if child.name != "lane" {
            w.add(format!("ignored <{}> inside <edge>", child.name));
            continue;
        }
        warn_unknown_attrs(child, LANE_ATTRS, w);
        for grandchild in &child.children {
            w.add(format!("ignored <{}> inside <lane>", grandchild.name));
        }
        let lane_label = format!("lane of {label}");
        let index = req(child, "index", &lane_label, diags).and_then(|v| match v.trim().parse::<u32>() {
            Ok(i) => Some(i),
            Err(_) => {
                diags.push(Diagnostic::bad_attribute("index", format!("{lane_label}: index '{v}' is not an integer")));
                None
            }
        });
        let speed = num(req(child, "speed", &lane_label, diags), "speed", &lane_label, diags);
        let shape = req(child, "shape", &lane_label, diags).and_then(|s| match parse_shape(s) {
            Some(pts) if pts.len() >= 2 => Some(pts),
            _ => {
                diags.push(Diagnostic::bad_attribute("shape", format!("{lane_label}: malformed shape '{s}'")));
                None
            }
        });
        let (Some(index), Some(speed), Some(shape)) = (index, speed, shape) else { continue };
        if let Some(declared) = child.attr("length").and_then(|v| v.parse::<f64>().ok()) {
            if (declared - polyline_length(&shape)).abs() > 0.5 {
                w.add("lane length differs from its shape length; shape length used");
            }
        }
        let canonical = Lane::lane_id(id, index);
        if child.attr("id").is_some_and(|l| l != canonical) {
            w.add(format!("lane id renamed to edge_index form on edge '{id}'"));
        }
        lanes.push(Lane::new(id, index, speed, shape));
    }
    lanes.sort_by_key(|l| l.index);
    for (i, l) in lanes.iter().enumerate() {
        if l.index as usize != i {
            diags.push(Diagnostic::bad_attribute(
                l.id.clone(),
                format!("{label}: lane indices must be 0..n without gaps or repeats, found '{}'", l.id),
            ));
            break;
        }
    }
    if lanes.is_empty() {
        diags.push(Diagnostic::bad_attribute(id, format!("{label} has no lanes")));
    }
    Some(CompiledEdge {
        id: id.to_string(),
        from: from?.to_string(),
        to: to?.to_string(),
        name: el.attr("name").map(str::to_string),
        lanes,
    })
}

fn parse_junction(el: &XmlElement, w: &mut Warnings, diags: &mut Vec<Diagnostic>) -> Option<Junction> {
    warn_unknown_attrs(el, JUNCTION_ATTRS, w);
    for child in &el.children {
        w.add(format!("ignored <{}> inside <junction>", child.name));
    }
    let label = format!("junction '{}'", el.attr("id").unwrap_or("?"));
    let id = req(el, "id", &label, diags)?;
    let kind = junction_kind(el.attr("type").unwrap_or("priority"), w);
    let x = num(req(el, "x", &label, diags), "x", &label, diags);
    let y = num(req(el, "y", &label, diags), "y", &label, diags);
    let shape = match el.attr("shape") {
        None | Some("") => Vec::new(),
        Some(s) => match parse_shape(s) {
            Some(mut pts) => {
                if pts.len() >= 3 && pts.first() != pts.last() {
                    let first = pts[0];
                    pts.push(first);
                    w.add("open junction shape closed");
                }
                pts
            }
            None => {
                diags.push(Diagnostic::bad_attribute("shape", format!("{label}: malformed shape '{s}'")));
                Vec::new()
            }
        },
    };
    let incoming_lanes = el
        .attr("incLanes")
        .unwrap_or("")
        .split_whitespace()
        .filter(|l| !l.starts_with(':'))
        .map(str::to_string)
        .collect();
    Some(Junction {
        id: id.to_string(),
        pos: crate::geometry::Point::new(x?, y?),
        kind,
        incoming_lanes,
        shape,
    })
}

fn parse_connection(el: &XmlElement, w: &mut Warnings, diags: &mut Vec<Diagnostic>) -> Option<Connection> {
    warn_unknown_attrs(el, CONNECTION_ATTRS, w);
    let label = format!(
        "connection {} -> {}",
        el.attr("from").unwrap_or("?"),
        el.attr("to").unwrap_or("?")
    );
    let from = req(el, "from", &label, diags)?;
    let to = req(el, "to", &label, diags)?;
    if from.starts_with(':') || to.starts_with(':') {
        w.add("skipped connection involving an internal edge");
        return None;
    }
    let lane = |attr: &str, diags: &mut Vec<Diagnostic>| {
        req(el, attr, &label, diags).and_then(|v| match v.trim().parse::<u32>() {
            Ok(i) => Some(i),
            Err(_) => {
                diags.push(Diagnostic::bad_attribute(attr, format!("{label}: {attr} '{v}' is not an integer")));
                None
            }
        })
    };
    let from_lane = lane("fromLane", diags);
    let to_lane = lane("toLane", diags);
    Some(Connection {
        from_edge: from.to_string(),
        to_edge: to.to_string(),
        from_lane: from_lane?,
        to_lane: to_lane?,
        direction: direction(el.attr("dir"), w),
    })
}

/// Reads a compiled net file and checks referential closure.
pub fn parse_net(net_text: &str) -> Result<ParsedNet, Vec<Diagnostic>> {
    let root = parse_document(net_text).map_err(|d| vec![d])?;
    if root.name != "net" {
        return Err(vec![Diagnostic::format_error(
            root.name.clone(),
            format!("expected root element <net> but found <{}>", root.name),
        )]);
    }
    let mut w = Warnings::default();
    let mut diags = Vec::new();
    let mut net = CompiledNetwork::default();
    let mut internal_junctions = HashSet::new();
    for (k, _) in &root.attrs {
        w.add(format!("ignored attribute '{k}' on <net>"));
    }
    for el in &root.children {
        match el.name.as_str() {
            "edge" => {
                if el.attr("function").is_some_and(|f| f != "normal") || el.attr("id").is_some_and(|i| i.starts_with(':')) {
                    w.add("skipped internal edge");
                    continue;
                }
                if let Some(e) = parse_edge(el, &mut w, &mut diags) {
                    net.edges.push(e);
                }
            }
            "junction" => {
                if el.attr("type") == Some("internal") {
                    if let Some(id) = el.attr("id") {
                        internal_junctions.insert(id.to_string());
                    }
                    w.add("skipped internal junction");
                    continue;
                }
                if let Some(j) = parse_junction(el, &mut w, &mut diags) {
                    net.junctions.push(j);
                }
            }
            "connection" => {
                if let Some(c) = parse_connection(el, &mut w, &mut diags) {
                    net.connections.push(c);
                }
            }
            other => w.add(format!("ignored <{other}> element")),
        }
    }
    let mut ids = HashSet::new();
    for e in &net.edges {
        if !ids.insert(e.id.as_str()) {
            diags.push(Diagnostic::new(DiagCode::DuplicateId, e.id.clone(), format!("edge id '{}' appears twice", e.id)));
        }
    }
    let mut jids = HashSet::new();
    for j in &net.junctions {
        if !jids.insert(j.id.as_str()) {
            diags.push(Diagnostic::new(DiagCode::DuplicateId, j.id.clone(), format!("junction id '{}' appears twice", j.id)));
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }
    let lanes: HashMap<&str, usize> = net.edges.iter().map(|e| (e.id.as_str(), e.lanes.len())).collect();
    for c in &net.connections {
        diags.extend(check_connection(&net, &lanes, c));
    }
    if diags.is_empty() {
        diags.extend(net.check_closure());
    }
    if diags.is_empty() {
        Ok(ParsedNet { network: net, warnings: w.into_vec() })
    } else {
        Err(diags)
    }
}

/// Deterministic net serialization: edges, then junctions, then connections,
/// each in stored order.
pub fn serialize_net(net: &CompiledNetwork) -> String {
    let mut out = String::from("<net>\n");
    for e in &net.edges {
        out.push_str("    <edge");
        push_attr(&mut out, "id", &e.id);
        push_attr(&mut out, "from", &e.from);
        push_attr(&mut out, "to", &e.to);
        if let Some(name) = &e.name {
            push_attr(&mut out, "name", name);
        }
        out.push_str(">\n");
        for l in &e.lanes {
            out.push_str("        <lane");
            push_attr(&mut out, "id", &l.id);
            push_attr(&mut out, "index", &l.index.to_string());
            push_attr(&mut out, "speed", &fmt2(l.speed));
            push_attr(&mut out, "length", &fmt2(l.length));
            push_attr(&mut out, "shape", &format_shape(&l.shape));
            out.push_str("/>\n");
        }
        out.push_str("    </edge>\n");
    }
    for j in &net.junctions {
        out.push_str("    <junction");
        push_attr(&mut out, "id", &j.id);
        push_attr(&mut out, "type", j.kind.as_str());
        push_attr(&mut out, "x", &fmt2(j.pos.x));
        push_attr(&mut out, "y", &fmt2(j.pos.y));
        push_attr(&mut out, "incLanes", &j.incoming_lanes.join(" "));
        push_attr(&mut out, "shape", &format_shape(&j.shape));
        out.push_str("/>\n");
    }
    for c in &net.connections {
        out.push_str("    <connection");
        push_attr(&mut out, "from", &c.from_edge);
        push_attr(&mut out, "to", &c.to_edge);
        push_attr(&mut out, "fromLane", &c.from_lane.to_string());
        push_attr(&mut out, "toLane", &c.to_lane.to_string());
        push_attr(&mut out, "dir", c.direction.as_str());
        out.push_str("/>\n");
    }
    out.push_str("</net>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_LANE: &str = r#"<net>
    <edge id="a" from="j0" to="j1">
        <lane id="a_0" index="0" speed="13.89" length="100.00" shape="0.00,-1.60 100.00,-1.60"/>
        <lane id="a_1" index="1" speed="13.89" length="100.00" shape="0.00,-4.80 100.00,-4.80"/>
    </edge>
    <edge id="b" from="j1" to="j2">
        <lane id="b_0" index="0" speed="13.89" length="50.00" shape="100.00,-1.60 150.00,-1.60"/>
    </edge>
    <junction id="j0" type="priority" x="0.00" y="0.00" incLanes="" shape=""/>
    <junction id="j1" type="priority" x="100.00" y="0.00" incLanes="a_0 a_1" shape=""/>
    <junction id="j2" type="priority" x="150.00" y="0.00" incLanes="b_0" shape=""/>
    <connection from="a" to="b" fromLane="0" toLane="0" dir="s"/>
</net>
"#;

    #[test]
    fn parse_and_reserialize_is_stable() {
        let parsed = parse_net(TWO_LANE).unwrap();
        assert!(parsed.warnings.is_empty(), "{:?}", parsed.warnings);
        assert_eq!(serialize_net(&parsed.network), TWO_LANE);
    }

    #[test]
    fn unknown_lane_in_connection() {
        let bad = TWO_LANE.replace(r#"fromLane="0""#, r#"fromLane="5""#);
        let d = parse_net(&bad).unwrap_err();
        assert_eq!(d[0].code, DiagCode::UnknownLane);
        assert!(d[0].message.contains("unknown lane"));
    }

    #[test]
    fn unknown_edge_in_connection() {
        let bad = TWO_LANE.replace(r#"to="b" fromLane"#, r#"to="zz" fromLane"#);
        let d = parse_net(&bad).unwrap_err();
        assert_eq!(d[0].code, DiagCode::UnknownEdge);
        assert_eq!(d[0].subject, "zz");
    }

    #[test]
    fn foreign_content_is_skipped_with_warnings() {
        let foreign = TWO_LANE
            .replace("<net>", r#"<net version="1.16"><location netOffset="0,0"/>"#)
            .replace(r#"<lane id="b_0""#, r#"<lane width="3.2" id="b_0""#)
            .replace(r#"dir="s"/>"#, r#"dir="s" state="M"/>"#);
        let parsed = parse_net(&foreign).unwrap();
        assert!(parsed.warnings.iter().any(|w| w.contains("location")));
        assert!(parsed.warnings.iter().any(|w| w.contains("width")));
        assert_eq!(serialize_net(&parsed.network), TWO_LANE);
    }

    #[test]
    fn malformed_is_format_error() {
        let d = parse_net("<net><edge id=\"a\"></net>").unwrap_err();
        assert_eq!(d[0].code, DiagCode::FormatError);
    }
}
