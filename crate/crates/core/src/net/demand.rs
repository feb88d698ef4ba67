//! Trips, routes and the simulator configuration file.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diag::{DiagCode, Diagnostic};
use crate::xmlutil::{check_identifier, fmt2, parse_document, push_attr, XmlElement};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VehicleKind {
    #[serde(rename = "AV")]
    Av,
    #[serde(rename = "BV")]
    Bv,
}

impl VehicleKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            VehicleKind::Av => "AV",
            VehicleKind::Bv => "BV",
        }
    }
}

impl fmt::Display for VehicleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VehicleKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "AV" => Ok(VehicleKind::Av),
            "BV" => Ok(VehicleKind::Bv),
            other => Err(format!("vehicle type '{other}' must be AV or BV")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub vehicle_id: String,
    pub vehicle_kind: VehicleKind,
    pub depart_edge: String,
    pub arrive_edge: String,
    /// seconds
    pub depart_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub vehicle_id: String,
    pub edges: Vec<String>,
    pub depart_time: f64,
}

/// Routes plus the id of the vehicle under test, as stored in a route file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RouteSet {
    pub routes: Vec<Route>,
    pub av_id: Option<String>,
}

const TRIP_ATTRS: &[&str] = &["id", "type", "from", "to", "depart"];

fn attr_req<'a>(el: &'a XmlElement, name: &str, label: &str, diags: &mut Vec<Diagnostic>) -> Option<&'a str> {
    let v = el.attr(name);
    if v.is_none() {
        diags.push(Diagnostic::bad_attribute(name, format!("{label} is missing required attribute '{name}'")));
    }
    v
}

fn ident(v: Option<&str>, attr: &str, label: &str, diags: &mut Vec<Diagnostic>) -> Option<String> {
    let v = v?;
    match check_identifier(v) {
        Ok(()) => Some(v.to_string()),
        Err(msg) => {
            let subject = if v.is_empty() { attr.to_string() } else { v.to_string() };
            diags.push(Diagnostic::bad_attribute(subject, format!("{label}: attribute '{attr}': {msg}")));
            None
        }
    }
}

fn depart(v: Option<&str>, label: &str, diags: &mut Vec<Diagnostic>) -> Option<f64> {
    let v = v?;
    match v.trim().parse::<f64>() {
        Ok(t) if t.is_finite() && t >= 0.0 => Some(t),
        _ => {
            diags.push(Diagnostic::bad_attribute(
                "depart",
                format!("{label}: depart '{v}' must be a number of seconds >= 0"),
            ));
            None
        }
    }
}

/// Strict trip-file parser (trip files usually come from a language model).
pub fn parse_trips(text: &str) -> Result<Vec<Trip>, Vec<Diagnostic>> {
    let root = parse_document(text).map_err(|d| vec![d])?;
    let mut diags = Vec::new();
    if root.name != "trips" {
        return Err(vec![Diagnostic::format_error(
            root.name.clone(),
            format!("expected root element <trips> but found <{}>", root.name),
        )]);
    }
    let mut trips = Vec::new();
    let mut seen = HashSet::new();
    for (i, el) in root.children.iter().enumerate() {
        if el.name != "trip" {
            diags.push(Diagnostic::format_error(
                el.name.clone(),
                format!("trip file may only contain <trip> elements, found <{}>", el.name),
            ));
            continue;
        }
        let label = match el.attr("id") {
            Some(id) => format!("trip '{id}'"),
            None => format!("trip #{}", i + 1),
        };
        let before = diags.len();
        for (k, _) in &el.attrs {
            if !TRIP_ATTRS.contains(&k.as_str()) {
                diags.push(Diagnostic::new(
                    DiagCode::UnknownAttribute,
                    k.clone(),
                    format!("{label} has unknown attribute '{k}'; allowed attributes are: {}", TRIP_ATTRS.join(", ")),
                ));
            }
        }
        if !el.children.is_empty() || !el.text.trim().is_empty() {
            diags.push(Diagnostic::format_error(el.name.clone(), format!("{label} must be an empty element")));
        }
        let id = ident(attr_req(el, "id", &label, &mut diags), "id", &label, &mut diags);
        let kind = attr_req(el, "type", &label, &mut diags).and_then(|t| match t.parse::<VehicleKind>() {
            Ok(k) => Some(k),
            Err(msg) => {
                diags.push(Diagnostic::bad_attribute(t, format!("{label}: {msg}")));
                None
            }
        });
        let from = ident(attr_req(el, "from", &label, &mut diags), "from", &label, &mut diags);
        let to = ident(attr_req(el, "to", &label, &mut diags), "to", &label, &mut diags);
        let t = depart(attr_req(el, "depart", &label, &mut diags), &label, &mut diags);
        if let Some(id) = &id {
            if !seen.insert(id.clone()) {
                diags.push(Diagnostic::new(DiagCode::DuplicateId, id.clone(), format!("vehicle id '{id}' is used twice")));
            }
        }
        if diags.len() == before {
            if let (Some(vehicle_id), Some(vehicle_kind), Some(depart_edge), Some(arrive_edge), Some(depart_time)) =
                (id, kind, from, to, t)
            {
                trips.push(Trip { vehicle_id, vehicle_kind, depart_edge, arrive_edge, depart_time });
            }
        }
    }
    if diags.is_empty() {
        Ok(trips)
    } else {
        Err(diags)
    }
}

pub fn serialize_trips(trips: &[Trip]) -> String {
    if trips.is_empty() {
        return "<trips/>\n".to_string();
    }
    let mut out = String::from("<trips>\n");
    for t in trips {
        out.push_str("    <trip");
        push_attr(&mut out, "id", &t.vehicle_id);
        push_attr(&mut out, "type", t.vehicle_kind.as_str());
        push_attr(&mut out, "from", &t.depart_edge);
        push_attr(&mut out, "to", &t.arrive_edge);
        push_attr(&mut out, "depart", &fmt2(t.depart_time));
        out.push_str("/>\n");
    }
    out.push_str("</trips>\n");
    out
}

struct VType {
    id: &'static str,
    accel: f64,
    decel: f64,
    length: f64,
    max_speed: f64,
}

const VTYPES: [VType; 2] = [
    VType { id: "AV", accel: 2.0, decel: 3.0, length: 5.0, max_speed: 33.33 },
    VType { id: "BV", accel: 2.0, decel: 3.0, length: 5.0, max_speed: 33.33 },
];

/// Route file with the two vehicle types; the vehicle named `av_id` gets
/// type AV, all others BV.
pub fn serialize_routes(routes: &[Route], av_id: Option<&str>) -> String {
    let mut out = String::from("<routes>\n");
    for v in &VTYPES {
        out.push_str("    <vType");
        push_attr(&mut out, "id", v.id);
        push_attr(&mut out, "accel", &fmt2(v.accel));
        push_attr(&mut out, "decel", &fmt2(v.decel));
        push_attr(&mut out, "length", &fmt2(v.length));
        push_attr(&mut out, "maxSpeed", &fmt2(v.max_speed));
        out.push_str("/>\n");
    }
    for r in routes {
        let kind = if Some(r.vehicle_id.as_str()) == av_id { "AV" } else { "BV" };
        out.push_str("    <vehicle");
        push_attr(&mut out, "id", &r.vehicle_id);
        push_attr(&mut out, "type", kind);
        push_attr(&mut out, "depart", &fmt2(r.depart_time));
        out.push_str(">\n        <route");
        push_attr(&mut out, "edges", &r.edges.join(" "));
        out.push_str("/>\n    </vehicle>\n");
    }
    out.push_str("</routes>\n");
    out
}

pub fn parse_routes(text: &str) -> Result<RouteSet, Vec<Diagnostic>> {
    let root = parse_document(text).map_err(|d| vec![d])?;
    if root.name != "routes" {
        return Err(vec![Diagnostic::format_error(
            root.name.clone(),
            format!("expected root element <routes> but found <{}>", root.name),
        )]);
    }
    let mut diags = Vec::new();
    let mut set = RouteSet::default();
    let mut seen = HashSet::new();
    for el in &root.children {
        match el.name.as_str() {
            "vType" => {}
            "vehicle" => {
                let label = format!("vehicle '{}'", el.attr("id").unwrap_or("?"));
                let id = ident(attr_req(el, "id", &label, &mut diags), "id", &label, &mut diags);
                let t = depart(attr_req(el, "depart", &label, &mut diags), &label, &mut diags);
                let route = el.children.iter().find(|c| c.name == "route").and_then(|r| r.attr("edges"));
                let edges: Vec<String> = route.unwrap_or("").split_whitespace().map(str::to_string).collect();
                if edges.is_empty() {
                    diags.push(Diagnostic::format_error(
                        el.attr("id").unwrap_or("vehicle").to_string(),
                        format!("{label} has no <route edges=...> child"),
                    ));
                }
                if let (Some(id), Some(t)) = (id, t) {
                    if !seen.insert(id.clone()) {
                        diags.push(Diagnostic::new(DiagCode::DuplicateId, id.clone(), format!("vehicle id '{id}' is used twice")));
                    }
                    if el.attr("type") == Some("AV") {
                        set.av_id = Some(id.clone());
                    }
                    if !edges.is_empty() {
                        set.routes.push(Route { vehicle_id: id, edges, depart_time: t });
                    }
                }
            }
            other => diags.push(Diagnostic::format_error(other, format!("unexpected <{other}> in route file"))),
        }
    }
    if diags.is_empty() {
        Ok(set)
    } else {
        Err(diags)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SumoConfig {
    pub net_file: String,
    pub route_files: String,
    pub begin: f64,
    pub end: f64,
}

pub fn serialize_sumocfg(cfg: &SumoConfig) -> String {
    let mut out = String::from("<configuration>\n    <input>\n        <net-file");
    push_attr(&mut out, "value", &cfg.net_file);
    out.push_str("/>\n        <route-files");
    push_attr(&mut out, "value", &cfg.route_files);
    out.push_str("/>\n    </input>\n    <time>\n        <begin");
    push_attr(&mut out, "value", &fmt2(cfg.begin));
    out.push_str("/>\n        <end");
    push_attr(&mut out, "value", &fmt2(cfg.end));
    out.push_str("/>\n    </time>\n</configuration>\n");
    out
}

pub fn parse_sumocfg(text: &str) -> Result<SumoConfig, Diagnostic> {
    let root = parse_document(text)?;
    let find = |section: &str, key: &str| -> Option<String> {
        root.children
            .iter()
            .find(|c| c.name == section)?
            .children
            .iter()
            .find(|c| c.name == key)?
            .attr("value")
            .map(str::to_string)
    };
    let missing = |k: &str| Diagnostic::format_error(k, format!("configuration is missing '{k}'"));
    let number = |k: &str, v: String| {
        v.parse::<f64>().map_err(|_| Diagnostic::bad_attribute(k, format!("configuration value {k}='{v}' is not a number")))
    };
    Ok(SumoConfig {
        net_file: find("input", "net-file").ok_or_else(|| missing("net-file"))?,
        route_files: find("input", "route-files").ok_or_else(|| missing("route-files"))?,
        begin: number("begin", find("time", "begin").ok_or_else(|| missing("begin"))?)?,
        end: number("end", find("time", "end").ok_or_else(|| missing("end"))?)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trips_round_trip_and_strictness() {
        let trips = vec![
            Trip {
                vehicle_id: "av".into(),
                vehicle_kind: VehicleKind::Av,
                depart_edge: "e0".into(),
                arrive_edge: "e2".into(),
                depart_time: 0.0,
            },
            Trip {
                vehicle_id: "bv1".into(),
                vehicle_kind: VehicleKind::Bv,
                depart_edge: "e1".into(),
                arrive_edge: "e2".into(),
                depart_time: 2.5,
            },
        ];
        let text = serialize_trips(&trips);
        assert_eq!(parse_trips(&text).unwrap(), trips);
        let bad = text.replace("depart=\"2.50\"", "depart=\"-1\"");
        assert_eq!(parse_trips(&bad).unwrap_err()[0].code, DiagCode::BadAttribute);
        let bad = text.replace("type=\"BV\"", "type=\"BV\" color=\"red\"");
        assert_eq!(parse_trips(&bad).unwrap_err()[0].code, DiagCode::UnknownAttribute);
        let bad = text.replace("bv1", "av");
        assert_eq!(parse_trips(&bad).unwrap_err()[0].code, DiagCode::DuplicateId);
    }

    #[test]
    fn routes_round_trip() {
        let routes = vec![
            Route { vehicle_id: "av".into(), edges: vec!["e0".into(), "e1".into()], depart_time: 0.0 },
            Route { vehicle_id: "b".into(), edges: vec!["e1".into()], depart_time: 3.0 },
        ];
        let text = serialize_routes(&routes, Some("av"));
        assert!(text.contains(r#"<vType id="AV""#));
        let set = parse_routes(&text).unwrap();
        assert_eq!(set.routes, routes);
        assert_eq!(set.av_id.as_deref(), Some("av"));
    }

    #[test]
    fn sumocfg_round_trip() {
        let cfg = SumoConfig {
            net_file: "net.net.xml".into(),
            route_files: "routes.rou.xml".into(),
            begin: 0.0,
            end: 120.0,
        };
        let text = serialize_sumocfg(&cfg);
        assert!(text.contains(r#"<net-file value="net.net.xml"/>"#));
        assert_eq!(parse_sumocfg(&text).unwrap(), cfg);
    }
}
