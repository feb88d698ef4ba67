//! Road-network data model and the on-disk formats: plain node/edge files,
//! compiled net files, trips, routes and the simulator configuration file.

mod demand;
mod netfile;
mod plain;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diag::{DiagCode, Diagnostic};
use crate::geometry::{polyline_length, Point};

pub use demand::{
    parse_routes, parse_sumocfg, parse_trips, serialize_routes, serialize_sumocfg, serialize_trips, Route,
    RouteSet, SumoConfig, Trip, VehicleKind,
};
pub use netfile::{parse_net, serialize_net, ParsedNet};
pub use plain::{parse_plain, serialize_plain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum NodeKind {
    #[default]
    Priority,
    TrafficLight,
    Unregulated,
}

impl NodeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodeKind::Priority => "priority",
            NodeKind::TrafficLight => "traffic_light",
            NodeKind::Unregulated => "unregulated",
        }
    }
}

impl FromStr for NodeKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "priority" => Ok(NodeKind::Priority),
            "traffic_light" => Ok(NodeKind::TrafficLight),
            "unregulated" => Ok(NodeKind::Unregulated),
            other => Err(format!(
                "node type '{other}' is not one of priority, traffic_light, unregulated"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDecl {
    pub id: String,
    pub pos: Point,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDecl {
    pub id: String,
    pub from: String,
    pub to: String,
    pub num_lanes: u32,
    /// m/s
    pub speed: f64,
    pub name: Option<String>,
    pub shape: Option<Vec<Point>>,
}

/// Declarative network description, in declaration order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NetworkPlan {
    pub nodes: Vec<NodeDecl>,
    pub edges: Vec<EdgeDecl>,
}

impl NetworkPlan {
    pub fn node(&self, id: &str) -> Option<&NodeDecl> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Centerline of an edge: its explicit shape, or the straight segment
    /// between its endpoint nodes. `None` if an endpoint is undeclared.
    pub fn centerline(&self, edge: &EdgeDecl) -> Option<Vec<Point>> {
        if let Some(shape) = &edge.shape {
            return Some(shape.clone());
        }
        let from = self.node(&edge.from)?;
        let to = self.node(&edge.to)?;
        Some(vec![from.pos, to.pos])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub id: String,
    pub index: u32,
    pub speed: f64,
    /// Arc length of `shape`.
    pub length: f64,
    pub shape: Vec<Point>,
}

impl Lane {
    pub fn lane_id(edge_id: &str, index: u32) -> String {
        format!("{edge_id}_{index}")
    }

    pub fn new(edge_id: &str, index: u32, speed: f64, shape: Vec<Point>) -> Self {
        Self { id: Self::lane_id(edge_id, index), index, speed, length: polyline_length(&shape), shape }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledEdge {
    pub id: String,
    pub from: String,
    pub to: String,
    pub name: Option<String>,
    pub lanes: Vec<Lane>,
}

impl CompiledEdge {
    /// Mean lane length.
    pub fn length(&self) -> f64 {
        if self.lanes.is_empty() {
            return 0.0;
        }
        self.lanes.iter().map(|l| l.length).sum::<f64>() / self.lanes.len() as f64
    }

    pub fn speed(&self) -> f64 {
        self.lanes.iter().map(|l| l.speed).fold(0.0, f64::max)
    }

    pub fn num_lanes(&self) -> u32 {
        self.lanes.len() as u32
    }

    pub fn is_reverse_of(&self, other: &CompiledEdge) -> bool {
        self.from == other.to && self.to == other.from
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Straight,
    Left,
    Right,
    Turn,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Straight => "s",
            Direction::Left => "l",
            Direction::Right => "r",
            Direction::Turn => "t",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Connection {
    pub from_edge: String,
    pub to_edge: String,
    pub from_lane: u32,
    pub to_lane: u32,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Junction {
    pub id: String,
    pub pos: Point,
    pub kind: NodeKind,
    pub incoming_lanes: Vec<String>,
    /// Closed polygon, or empty for dead ends.
    pub shape: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CompiledNetwork {
    pub edges: Vec<CompiledEdge>,
    pub junctions: Vec<Junction>,
    pub connections: Vec<Connection>,
}

impl CompiledNetwork {
    pub fn edge(&self, id: &str) -> Option<&CompiledEdge> {
        self.edges.iter().find(|e| e.id == id)
    }

    pub fn junction(&self, id: &str) -> Option<&Junction> {
        self.junctions.iter().find(|j| j.id == id)
    }

    pub fn edge_index(&self) -> HashMap<&str, usize> {
        self.edges.iter().enumerate().map(|(i, e)| (e.id.as_str(), i)).collect()
    }

    pub fn incoming(&self, junction: &str) -> impl Iterator<Item = &CompiledEdge> {
        let junction = junction.to_string();
        self.edges.iter().filter(move |e| e.to == junction)
    }

    pub fn outgoing(&self, junction: &str) -> impl Iterator<Item = &CompiledEdge> {
        let junction = junction.to_string();
        self.edges.iter().filter(move |e| e.from == junction)
    }

    /// Distinct successor edges of `edge` according to the connections, in
    /// connection order.
    pub fn successors(&self, edge: &str) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for c in self.connections.iter().filter(|c| c.from_edge == edge) {
            if seen.insert(c.to_edge.as_str()) {
                out.push(c.to_edge.as_str());
            }
        }
        out
    }

    /// Every id reference must resolve. Returns one diagnostic per dangling
    /// reference; an empty list means the network is referentially closed.
    pub fn check_closure(&self) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        let junctions: BTreeSet<&str> = self.junctions.iter().map(|j| j.id.as_str()).collect();
        let mut lanes: HashMap<&str, usize> = HashMap::new();
        let mut lane_ids: BTreeSet<&str> = BTreeSet::new();
        if self.edges.is_empty() {
            diags.push(Diagnostic::format_error("net", "network 'net' has no edges"));
        }
        for e in &self.edges {
            lanes.insert(e.id.as_str(), e.lanes.len());
            if e.lanes.is_empty() {
                diags.push(Diagnostic::bad_attribute(e.id.clone(), format!("edge '{}' has no lanes", e.id)));
            }
            for (i, l) in e.lanes.iter().enumerate() {
                lane_ids.insert(l.id.as_str());
                if l.index as usize != i || l.id != Lane::lane_id(&e.id, l.index) {
                    diags.push(Diagnostic::bad_attribute(
                        l.id.clone(),
                        format!("lane '{}' of edge '{}' is out of order or misnamed", l.id, e.id),
                    ));
                }
            }
            for end in [&e.from, &e.to] {
                if !junctions.contains(end.as_str()) {
                    diags.push(Diagnostic::new(
                        DiagCode::UnknownNode,
                        end.clone(),
                        format!("edge '{}' references junction '{}' which does not exist", e.id, end),
                    ));
                }
            }
        }
        for j in &self.junctions {
            for l in &j.incoming_lanes {
                if !lane_ids.contains(l.as_str()) {
                    diags.push(Diagnostic::new(
                        DiagCode::UnknownLane,
                        l.clone(),
                        format!("junction '{}' lists incoming lane '{}' which does not exist", j.id, l),
                    ));
                }
            }
            if !j.shape.is_empty() && j.shape.first() != j.shape.last() {
                diags.push(Diagnostic::bad_attribute(j.id.clone(), format!("shape of junction '{}' is not closed", j.id)));
            }
        }
        for c in &self.connections {
            diags.extend(check_connection(self, &lanes, c));
        }
        diags
    }
}

pub(crate) fn check_connection(net: &CompiledNetwork, lanes: &HashMap<&str, usize>, c: &Connection) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    for (edge, lane) in [(&c.from_edge, c.from_lane), (&c.to_edge, c.to_lane)] {
        match lanes.get(edge.as_str()) {
            None => diags.push(Diagnostic::new(
                DiagCode::UnknownEdge,
                edge.clone(),
                format!("connection {} -> {} references edge '{}' which does not exist", c.from_edge, c.to_edge, edge),
            )),
            Some(n) if lane as usize >= *n => {
                let lane_id = Lane::lane_id(edge, lane);
                diags.push(Diagnostic::new(
                    DiagCode::UnknownLane,
                    lane_id.clone(),
                    format!(
                        "connection {} -> {} references an unknown lane '{}' (edge '{}' has {} lanes)",
                        c.from_edge, c.to_edge, lane_id, edge, n
                    ),
                ))
            }
            Some(_) => {}
        }
    }
    if diags.is_empty() {
        let from = net.edge(&c.from_edge).map(|e| e.to.as_str());
        let to = net.edge(&c.to_edge).map(|e| e.from.as_str());
        if from != to {
            diags.push(Diagnostic::bad_attribute(
                c.from_edge.clone(),
                format!(
                    "connection {} -> {} joins edges that do not meet at a common junction",
                    c.from_edge, c.to_edge
                ),
            ));
        }
    }
    diags
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkStats {
    pub total_lanes: usize,
    pub total_edges: usize,
    /// Sum over edges of the mean lane length, meters.
    pub total_edge_length: f64,
}

pub fn network_stats(net: &CompiledNetwork) -> NetworkStats {
    NetworkStats {
        total_lanes: net.edges.iter().map(|e| e.lanes.len()).sum(),
        total_edges: net.edges.len(),
        total_edge_length: net.edges.iter().map(CompiledEdge::length).sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight_edge(id: &str, from: &str, to: &str, lanes: u32, len: f64) -> CompiledEdge {
        CompiledEdge {
            id: id.into(),
            from: from.into(),
            to: to.into(),
            name: None,
            lanes: (0..lanes)
                .map(|i| Lane::new(id, i, 13.89, vec![Point::new(0.0, -(i as f64)), Point::new(len, -(i as f64))]))
                .collect(),
        }
    }

    #[test]
    fn stats_single_edge() {
        let net = CompiledNetwork { edges: vec![straight_edge("e", "a", "b", 2, 100.0)], ..Default::default() };
        let s = network_stats(&net);
        assert_eq!((s.total_lanes, s.total_edges), (2, 1));
        assert!((s.total_edge_length - 100.0).abs() < 1e-12);
    }

    #[test]
    fn closure_flags_missing_lane() {
        let net = CompiledNetwork {
            edges: vec![straight_edge("e", "a", "b", 2, 100.0), straight_edge("f", "b", "c", 1, 50.0)],
            junctions: ["a", "b", "c"]
                .iter()
                .map(|id| Junction {
                    id: id.to_string(),
                    pos: Point::new(0.0, 0.0),
                    kind: NodeKind::Priority,
                    incoming_lanes: vec![],
                    shape: vec![],
                })
                .collect(),
            connections: vec![Connection {
                from_edge: "e".into(),
                to_edge: "f".into(),
                from_lane: 5,
                to_lane: 0,
                direction: Direction::Straight,
            }],
        };
        let d = net.check_closure();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, DiagCode::UnknownLane);
        assert!(d[0].message.contains("e_5"));
    }
}
