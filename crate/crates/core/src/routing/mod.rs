//! Edge-level shortest routes over the connection graph and random demand.

mod randtrips;

use std::cmp::Ordering;
use std::collections::{HashMap, VecDeque};

use thiserror::Error;

use crate::diag::{DiagCode, Diagnostic};
use crate::net::{CompiledNetwork, Route, Trip};

pub use randtrips::{fringe_edges, random_trips, subsample_trips, TripGenParams};

#[derive(Debug, Error)]
pub enum RoutingError {
    #[error("random trips need at least 2 eligible edges, the network has {0}")]
    NotEnoughEdges(usize),
    #[error("cannot keep {n} of {len} trips")]
    SubsampleTooLarge { n: usize, len: usize },
    #[error("invalid trip generation parameters: {0}")]
    BadParams(String),
}

/// Vertices are edges, arcs are permitted transitions, cost is free-flow
/// travel time in seconds.
#[derive(Debug, Clone, Default)]
pub struct RoutingGraph {
    pub ids: Vec<String>,
    pub cost: Vec<f64>,
    pub succ: Vec<Vec<usize>>,
    index: HashMap<String, usize>,
}

fn unreachable(from: &str, to: &str) -> Diagnostic {
    Diagnostic::new(
        DiagCode::Unreachable,
        format!("{from}->{to}"),
        format!("no route from edge '{from}' to edge '{to}' follows the network's connections"),
    )
}

fn unknown_edge(id: &str) -> Diagnostic {
    Diagnostic::new(DiagCode::UnknownEdge, id, format!("edge '{id}' does not exist in the network"))
}

fn cmp_label(a: &(f64, Vec<usize>), b: &(f64, Vec<usize>), ids: &[String]) -> Ordering {
    let tol = 1e-9 * a.0.abs().max(b.0.abs()).max(1.0);
    if (a.0 - b.0).abs() > tol {
        return a.0.total_cmp(&b.0);
    }
    a.1.iter().map(|&i| &ids[i]).cmp(b.1.iter().map(|&i| &ids[i]))
}

impl RoutingGraph {
    pub fn from_network(net: &CompiledNetwork) -> Self {
        let mut g = RoutingGraph::default();
        for e in &net.edges {
            g.add_vertex(&e.id, e.length() / e.speed());
        }
        for c in &net.connections {
            if let (Some(&a), Some(&b)) = (g.index.get(&c.from_edge), g.index.get(&c.to_edge)) {
                if !g.succ[a].contains(&b) {
                    g.succ[a].push(b);
                }
            }
        }
        g
    }

    pub fn add_vertex(&mut self, id: &str, cost: f64) -> usize {
        let i = self.ids.len();
        self.ids.push(id.to_string());
        self.cost.push(cost);
        self.succ.push(Vec::new());
        self.index.insert(id.to_string(), i);
        i
    }

    pub fn add_arc(&mut self, from: usize, to: usize) {
        if !self.succ[from].contains(&to) {
            self.succ[from].push(to);
        }
    }

    pub fn vertex(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Dijkstra over (cost, path) labels; equal costs fall back to the
    /// lexicographically smallest edge-id sequence.
    pub fn shortest(&self, from: usize, to: usize) -> Option<(f64, Vec<usize>)> {
        let n = self.ids.len();
        let mut best: Vec<Option<(f64, Vec<usize>)>> = vec![None; n];
        let mut done = vec![false; n];
        best[from] = Some((self.cost[from], vec![from]));
        loop {
            let cur = (0..n)
                .filter(|&v| !done[v] && best[v].is_some())
                .min_by(|&a, &b| cmp_label(best[a].as_ref().unwrap(), best[b].as_ref().unwrap(), &self.ids))?;
            done[cur] = true;
            let (cost, path) = best[cur].clone().unwrap();
            if cur == to {
                return Some((cost, path));
            }
            for &nx in &self.succ[cur] {
                if done[nx] {
                    continue;
                }
                let mut p = path.clone();
                p.push(nx);
                let label = (cost + self.cost[nx], p);
                let better = match &best[nx] {
                    None => true,
                    Some(old) => cmp_label(&label, old, &self.ids) == Ordering::Less,
                };
                if better {
                    best[nx] = Some(label);
                }
            }
        }
    }

    /// Vertices reachable from `from`, including itself.
    pub fn reachable(&self, from: usize) -> Vec<bool> {
        let mut seen = vec![false; self.ids.len()];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(v) = queue.pop_front() {
            for &nx in &self.succ[v] {
                if !seen[nx] {
                    seen[nx] = true;
                    queue.push_back(nx);
                }
            }
        }
        seen
    }

    pub fn route(&self, from_edge: &str, to_edge: &str) -> Result<(f64, Vec<String>), Diagnostic> {
        let a = self.vertex(from_edge).ok_or_else(|| unknown_edge(from_edge))?;
        let b = self.vertex(to_edge).ok_or_else(|| unknown_edge(to_edge))?;
        let (cost, path) = self.shortest(a, b).ok_or_else(|| unreachable(from_edge, to_edge))?;
        Ok((cost, path.into_iter().map(|i| self.ids[i].clone()).collect()))
    }
}

/// Minimum travel-time route. The vehicle id is left empty.
pub fn shortest_route(net: &CompiledNetwork, from_edge: &str, to_edge: &str) -> Result<Route, Diagnostic> {
    let (_, edges) = RoutingGraph::from_network(net).route(from_edge, to_edge)?;
    Ok(Route { vehicle_id: String::new(), edges, depart_time: 0.0 })
}

pub type TripFailure = (Trip, Diagnostic);

pub fn expand_trips(net: &CompiledNetwork, trips: &[Trip]) -> (Vec<Route>, Vec<TripFailure>) {
    let graph = RoutingGraph::from_network(net);
    let mut routes = Vec::new();
    let mut failures = Vec::new();
    for t in trips {
        match graph.route(&t.depart_edge, &t.arrive_edge) {
            Ok((_, edges)) => routes.push(Route { vehicle_id: t.vehicle_id.clone(), edges, depart_time: t.depart_time }),
            Err(d) => failures.push((t.clone(), d)),
        }
    }
    (routes, failures)
}

pub fn route_length(net: &CompiledNetwork, route: &Route) -> Result<f64, Diagnostic> {
    route
        .edges
        .iter()
        .map(|id| net.edge(id).map(|e| e.length()).ok_or_else(|| unknown_edge(id)))
        .sum()
}

/// Free-flow travel time of a route in seconds.
pub fn route_cost(net: &CompiledNetwork, edges: &[String]) -> Result<f64, Diagnostic> {
    edges
        .iter()
        .map(|id| net.edge(id).map(|e| e.length() / e.speed()).ok_or_else(|| unknown_edge(id)))
        .sum()
}

/// Checks that consecutive edges are linked by a connection.
pub fn route_is_connected(net: &CompiledNetwork, edges: &[String]) -> bool {
    edges.windows(2).all(|w| {
        net.connections.iter().any(|c| c.from_edge == w[0] && c.to_edge == w[1])
    })
}
