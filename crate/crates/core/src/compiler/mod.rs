//! Turns a [`NetworkPlan`] into a [`CompiledNetwork`]: validation, lane
//! geometry, junction polygons, connection inference and turn directions.

mod feedback;
mod priority;
mod scene;

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::diag::{DiagCode, Diagnostic};
use crate::geometry::{convex_hull, end_heading, offset_right, polyline_length, signed_delta_deg, start_heading, Point};
use crate::net::{CompiledEdge, CompiledNetwork, Connection, Direction, EdgeDecl, Junction, Lane, NetworkPlan, NodeDecl};

pub use feedback::{corrective_instruction, diagnostics_to_feedback};
pub use priority::{connection_id, JunctionRules, RightOfWay};
pub use scene::{classify_scene, junction_roads, Road, SceneType};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompileOptions {
    pub lane_width: f64,
    pub min_edge_length: f64,
    pub straight_threshold_deg: f64,
    pub uturn_threshold_deg: f64,
}

impl Default for CompileOptions {
    fn default() -> Self {
        Self { lane_width: 3.2, min_edge_length: 5.0, straight_threshold_deg: 30.0, uturn_threshold_deg: 150.0 }
    }
}

impl CompileOptions {
    pub fn check(&self) -> Result<(), String> {
        if !(self.lane_width > 0.0) {
            return Err(format!("lane_width must be > 0, got {}", self.lane_width));
        }
        if !(0.0 < self.straight_threshold_deg
            && self.straight_threshold_deg < self.uturn_threshold_deg
            && self.uturn_threshold_deg < 180.0)
        {
            return Err(format!(
                "need 0 < straight_threshold_deg ({}) < uturn_threshold_deg ({}) < 180",
                self.straight_threshold_deg, self.uturn_threshold_deg
            ));
        }
        Ok(())
    }
}

pub fn classify_direction(in_heading: f64, out_heading: f64, opts: &CompileOptions) -> Direction {
    let d = signed_delta_deg(in_heading, out_heading);
    if d.abs() <= opts.straight_threshold_deg {
        Direction::Straight
    } else if d > opts.straight_threshold_deg && d <= opts.uturn_threshold_deg {
        Direction::Left
    } else if d >= -opts.uturn_threshold_deg && d < -opts.straight_threshold_deg {
        Direction::Right
    } else {
        Direction::Turn
    }
}

/// Every problem that prevents compilation. Empty means compilable.
pub fn validate(plan: &NetworkPlan, opts: &CompileOptions) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut node_ids = HashSet::new();
    for n in &plan.nodes {
        if !node_ids.insert(n.id.as_str()) {
            diags.push(Diagnostic::new(DiagCode::DuplicateId, n.id.clone(), format!("node id '{}' is declared twice", n.id)));
        }
        if !n.pos.is_finite() {
            diags.push(Diagnostic::bad_attribute(n.id.clone(), format!("node '{}' has a non-finite position", n.id)));
        }
    }
    if plan.edges.is_empty() {
        diags.push(Diagnostic::bad_attribute("edges", "the plan declares no edges; at least one edge is required"));
    }
    let mut edge_ids = HashSet::new();
    for e in &plan.edges {
        if !edge_ids.insert(e.id.as_str()) {
            diags.push(Diagnostic::new(DiagCode::DuplicateId, e.id.clone(), format!("edge id '{}' is declared twice", e.id)));
        }
        let mut dangling = false;
        for (role, end) in [("from", &e.from), ("to", &e.to)] {
            if !node_ids.contains(end.as_str()) {
                dangling = true;
                diags.push(Diagnostic::new(
                    DiagCode::UnknownNode,
                    end.clone(),
                    format!("edge '{}' has {role}=\"{end}\" but node '{end}' is not declared", e.id),
                ));
            }
        }
        if e.from == e.to {
            diags.push(Diagnostic::bad_attribute(
                e.id.clone(),
                format!("edge '{}' starts and ends at the same node '{}'", e.id, e.from),
            ));
        }
        if !(e.speed > 0.0) || !e.speed.is_finite() {
            diags.push(Diagnostic::bad_attribute(
                e.id.clone(),
                format!("edge '{}' has speed {} but speed must be > 0 (m/s)", e.id, e.speed),
            ));
        }
        if e.num_lanes < 1 {
            diags.push(Diagnostic::bad_attribute(e.id.clone(), format!("edge '{}' has numLanes 0 but needs at least 1", e.id)));
        }
        if let Some(shape) = &e.shape {
            if shape.len() < 2 || shape.iter().any(|p| !p.is_finite()) {
                diags.push(Diagnostic::bad_attribute(e.id.clone(), format!("edge '{}' has an invalid shape", e.id)));
                continue;
            }
        }
        if dangling {
            continue;
        }
        if let Some(line) = plan.centerline(e) {
            let len = polyline_length(&line);
            if len < opts.min_edge_length {
                diags.push(Diagnostic::new(
                    DiagCode::TooShort,
                    e.id.clone(),
                    format!(
                        "edge '{}' is {:.2} m long, shorter than the minimum of {:.2} m",
                        e.id, len, opts.min_edge_length
                    ),
                ));
            }
        }
    }
    diags
}

/// Octagon around `p`, used to give junction polygons some body.
fn octagon(p: &Point, r: f64) -> impl Iterator<Item = Point> + '_ {
    (0..8).map(move |k| {
        let a = (k as f64 * 45.0 + 22.5).to_radians();
        Point::new(p.x + r * a.cos(), p.y + r * a.sin())
    })
}

fn build_edge(plan: &NetworkPlan, e: &EdgeDecl, w: f64) -> CompiledEdge {
    let center = plan.centerline(e).unwrap_or_default();
    let lanes = (0..e.num_lanes)
        .map(|i| Lane::new(&e.id, i, e.speed, offset_right(&center, (i as f64 + 0.5) * w)))
        .collect();
    CompiledEdge { id: e.id.clone(), from: e.from.clone(), to: e.to.clone(), name: e.name.clone(), lanes }
}

fn build_junction(node: &NodeDecl, edges: &[CompiledEdge], w: f64) -> Junction {
    let incident: Vec<&CompiledEdge> = edges.iter().filter(|e| e.from == node.id || e.to == node.id).collect();
    let degree = junction_roads(edges, &node.id).len();
    let incoming_lanes = edges
        .iter()
        .filter(|e| e.to == node.id)
        .flat_map(|e| e.lanes.iter().map(|l| l.id.clone()))
        .collect();
    let shape = if degree <= 1 {
        Vec::new()
    } else {
        let mut pts = Vec::new();
        for e in &incident {
            for l in &e.lanes {
                let end = if e.to == node.id { l.shape.last() } else { l.shape.first() };
                if let Some(p) = end {
                    pts.extend(octagon(p, w / 2.0));
                }
            }
        }
        convex_hull(&pts)
    };
    Junction { id: node.id.clone(), pos: node.pos, kind: node.kind, incoming_lanes, shape }
}

fn infer_connections(junction: &str, edges: &[CompiledEdge], opts: &CompileOptions) -> Vec<Connection> {
    let incoming: Vec<&CompiledEdge> = edges.iter().filter(|e| e.to == junction).collect();
    let outgoing: Vec<&CompiledEdge> = edges.iter().filter(|e| e.from == junction).collect();
    let mut out = Vec::new();
    for inc in &incoming {
        let targets: Vec<&&CompiledEdge> = {
            let non_reverse: Vec<_> = outgoing.iter().filter(|o| !o.is_reverse_of(inc)).collect();
            if non_reverse.is_empty() {
                outgoing.iter().collect()
            } else {
                non_reverse
            }
        };
        let in_heading = inc.lanes.first().and_then(|l| end_heading(&l.shape)).unwrap_or(0.0);
        for lane in &inc.lanes {
            for o in &targets {
                let out_heading = o.lanes.first().and_then(|l| start_heading(&l.shape)).unwrap_or(0.0);
                out.push(Connection {
                    from_edge: inc.id.clone(),
                    to_edge: o.id.clone(),
                    from_lane: lane.index,
                    to_lane: lane.index.min(o.num_lanes().saturating_sub(1)),
                    direction: classify_direction(in_heading, out_heading, opts),
                });
            }
        }
    }
    out
}

/// Validates and compiles. Nodes that no edge touches are dropped.
pub fn compile(plan: &NetworkPlan, opts: &CompileOptions) -> Result<CompiledNetwork, Vec<Diagnostic>> {
    if let Err(msg) = opts.check() {
        return Err(vec![Diagnostic::bad_attribute("options", format!("invalid compile options: {msg}"))]);
    }
    let diags = validate(plan, opts);
    if !diags.is_empty() {
        return Err(diags);
    }
    let edges: Vec<CompiledEdge> = plan.edges.iter().map(|e| build_edge(plan, e, opts.lane_width)).collect();
    let referenced: HashSet<&str> = plan.edges.iter().flat_map(|e| [e.from.as_str(), e.to.as_str()]).collect();
    let mut junctions = Vec::new();
    let mut connections = Vec::new();
    for node in &plan.nodes {
        if !referenced.contains(node.id.as_str()) {
            log::warn!("node '{}' is not used by any edge and was dropped", node.id);
            continue;
        }
        junctions.push(build_junction(node, &edges, opts.lane_width));
        connections.extend(infer_connections(&node.id, &edges, opts));
    }
    Ok(CompiledNetwork { edges, junctions, connections })
}

/// Rebuilds a plan from a compiled network. Lane 0 is shifted back by half a
/// lane width to recover the centerline; shapes with only two points are left
/// implicit.
pub fn reconstruct_plan(net: &CompiledNetwork, lane_width: f64) -> NetworkPlan {
    let nodes = net
        .junctions
        .iter()
        .map(|j| NodeDecl { id: j.id.clone(), pos: j.pos, kind: j.kind })
        .collect();
    let edges = net
        .edges
        .iter()
        .map(|e| {
            let shape = e
                .lanes
                .first()
                .map(|l| offset_right(&l.shape, -lane_width / 2.0))
                .filter(|s| s.len() > 2);
            EdgeDecl {
                id: e.id.clone(),
                from: e.from.clone(),
                to: e.to.clone(),
                num_lanes: e.num_lanes(),
                speed: e.speed(),
                name: e.name.clone(),
                shape,
            }
        })
        .collect();
    NetworkPlan { nodes, edges }
}

/// Connections grouped by the junction they pass through.
pub fn connections_by_junction(net: &CompiledNetwork) -> BTreeMap<String, Vec<usize>> {
    let to_junction: HashMap<&str, &str> = net.edges.iter().map(|e| (e.id.as_str(), e.to.as_str())).collect();
    let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, c) in net.connections.iter().enumerate() {
        if let Some(j) = to_junction.get(c.from_edge.as_str()) {
            out.entry(j.to_string()).or_default().push(i);
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod testnets {
    use crate::geometry::Point;
    use crate::net::{EdgeDecl, NetworkPlan, NodeDecl, NodeKind};

    pub fn node(id: &str, x: f64, y: f64) -> NodeDecl {
        NodeDecl { id: id.into(), pos: Point::new(x, y), kind: NodeKind::Priority }
    }

    pub fn edge(id: &str, from: &str, to: &str, lanes: u32, speed: f64) -> EdgeDecl {
        EdgeDecl {
            id: id.into(),
            from: from.into(),
            to: to.into(),
            num_lanes: lanes,
            speed,
            name: None,
            shape: None,
        }
    }

    /// Center node with approach/exit pairs at 0, 180 and 270 degrees.
    pub fn t_plan() -> NetworkPlan {
        let mut plan = NetworkPlan {
            nodes: vec![node("c", 0.0, 0.0), node("e", 100.0, 0.0), node("w", -100.0, 0.0), node("s", 0.0, -100.0)],
            edges: Vec::new(),
        };
        for arm in ["e", "w", "s"] {
            plan.edges.push(edge(&format!("{arm}_in"), arm, "c", 2, 13.89));
            plan.edges.push(edge(&format!("{arm}_out"), "c", arm, 2, 13.89));
        }
        plan
    }
}

#[cfg(test)]
mod tests {
    use super::testnets::*;
    use super::*;
    use crate::geometry::distance_to_line;
    use proptest::prelude::*;

    #[test]
    fn directions() {
        let o = CompileOptions::default();
        assert_eq!(classify_direction(90.0, 90.0, &o), Direction::Straight);
        assert_eq!(classify_direction(0.0, 90.0, &o), Direction::Left);
        assert_eq!(classify_direction(0.0, 270.0, &o), Direction::Right);
        assert_eq!(classify_direction(0.0, 180.0, &o), Direction::Turn);
        assert_eq!(classify_direction(0.0, 30.0, &o), Direction::Straight);
        assert_eq!(classify_direction(0.0, 150.0, &o), Direction::Left);
        assert_eq!(classify_direction(0.0, 210.0, &o), Direction::Right);
    }

    #[test]
    fn direction_partition_on_grid() {
        let o = CompileOptions::default();
        // independent oracle over integer tenths of a degree in (-1800, 1800]
        for tenth in -1799..=1800i32 {
            let d = tenth as f64 / 10.0;
            let expected = if tenth.abs() <= 300 {
                Direction::Straight
            } else if tenth > 300 && tenth <= 1500 {
                Direction::Left
            } else if (-1500..-300).contains(&tenth) {
                Direction::Right
            } else {
                Direction::Turn
            };
            let out = crate::geometry::normalize_deg(d);
            assert_eq!(classify_direction(0.0, out, &o), expected, "delta {d}");
        }
    }

    #[test]
    fn dangling_endpoint() {
        let plan = NetworkPlan {
            nodes: vec![node("n0", 0.0, 0.0)],
            edges: vec![edge("e1", "n0", "n5", 1, 10.0)],
        };
        let d = validate(&plan, &CompileOptions::default());
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, DiagCode::UnknownNode);
        assert_eq!(d[0].subject, "n5");
        assert!(d[0].message.contains("n5"));
    }

    #[test]
    fn simple_plans() {
        let plan = NetworkPlan {
            nodes: vec![node("a", 0.0, 0.0), node("b", 100.0, 0.0)],
            edges: vec![edge("e", "a", "b", 1, 10.0)],
        };
        let o = CompileOptions::default();
        assert!(validate(&plan, &o).is_empty());
        let net = compile(&plan, &o).unwrap();
        assert_eq!(net.junctions.len(), 2);
        assert!(net.junctions.iter().all(|j| j.shape.is_empty()));
        assert_eq!(net.edges.len(), 1);
        assert!(net.connections.is_empty());
        assert!(net.check_closure().is_empty());

        let short = NetworkPlan {
            nodes: vec![node("a", 0.0, 0.0), node("b", 3.0, 0.0)],
            edges: vec![edge("e", "a", "b", 1, 10.0)],
        };
        let d = validate(&short, &o);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, DiagCode::TooShort);
    }

    #[test]
    fn t_plan_connections() {
        let plan = t_plan();
        let net = compile(&plan, &CompileOptions::default()).unwrap();
        // oracle: every (incoming, outgoing) pair at c that is not a reverse pair,
        // times the two incoming lanes
        let mut expected = 0;
        for i in plan.edges.iter().filter(|e| e.to == "c") {
            for o in plan.edges.iter().filter(|e| e.from == "c") {
                if !(i.from == o.to && i.to == o.from) {
                    expected += i.num_lanes;
                }
            }
        }
        assert_eq!(expected, 12);
        let at_c: Vec<_> = net.connections.iter().filter(|c| c.from_edge.ends_with("_in")).collect();
        assert_eq!(at_c.len(), 12);
        for c in &at_c {
            let f = net.edge(&c.from_edge).unwrap();
            let t = net.edge(&c.to_edge).unwrap();
            assert!(!f.is_reverse_of(t));
        }
        // dead ends turn around since reverse is the only option
        let dead_end: Vec<_> = net.connections.iter().filter(|c| c.from_edge == "e_out").collect();
        assert_eq!(dead_end.len(), 2);
        assert!(dead_end.iter().all(|c| c.direction == Direction::Turn));
        let c = net.junction("c").unwrap();
        assert!(c.shape.len() > 3);
        assert_eq!(c.shape.first(), c.shape.last());
        assert!(net.check_closure().is_empty());
        // w_in heads east (0 deg): to e_out straight, to s_out right
        let dir = |from: &str, to: &str| {
            net.connections.iter().find(|c| c.from_edge == from && c.to_edge == to).unwrap().direction
        };
        assert_eq!(dir("w_in", "e_out"), Direction::Straight);
        assert_eq!(dir("w_in", "s_out"), Direction::Right);
        assert_eq!(dir("e_in", "s_out"), Direction::Left);
    }

    #[test]
    fn parallel_lane_offset() {
        let plan = NetworkPlan {
            nodes: vec![node("a", 0.0, 0.0), node("b", 70.0, 40.0)],
            edges: vec![edge("e", "a", "b", 2, 10.0)],
        };
        let net = compile(&plan, &CompileOptions::default()).unwrap();
        let l0 = &net.edges[0].lanes[0].shape;
        let l1 = &net.edges[0].lanes[1].shape;
        for p in l1 {
            assert!((distance_to_line(p, &l0[0], &l0[1]) - 3.2).abs() < 1e-6);
        }
        for p in l0 {
            assert!((distance_to_line(p, &Point::new(0.0, 0.0), &Point::new(70.0, 40.0)) - 1.6).abs() < 1e-6);
        }
    }

    #[test]
    fn reconstruction_is_isomorphic() {
        let mut plan = t_plan();
        plan.edges[0].shape = Some(vec![Point::new(100.0, 0.0), Point::new(50.0, 10.0), Point::new(0.0, 0.0)]);
        let o = CompileOptions::default();
        let net = compile(&plan, &o).unwrap();
        let again = compile(&reconstruct_plan(&net, o.lane_width), &o).unwrap();
        let ids = |n: &CompiledNetwork| n.edges.iter().map(|e| e.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&net), ids(&again));
        let set = |n: &CompiledNetwork| n.connections.iter().cloned().collect::<HashSet<_>>();
        assert_eq!(set(&net), set(&again));
        for (a, b) in net.edges.iter().zip(&again.edges) {
            for (la, lb) in a.lanes.iter().zip(&b.lanes) {
                for (pa, pb) in la.shape.iter().zip(&lb.shape) {
                    assert!(pa.distance(pb) < 1e-6);
                }
            }
        }
    }

    #[test]
    fn deterministic_serialization() {
        let o = CompileOptions::default();
        let a = crate::net::serialize_net(&compile(&t_plan(), &o).unwrap());
        let b = crate::net::serialize_net(&compile(&t_plan(), &o).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn all_faults_reported() {
        let mut plan = t_plan();
        plan.edges[0].from = "ghost".into();
        plan.edges[1].speed = 0.0;
        plan.edges[2].num_lanes = 0;
        plan.edges[3].id = plan.edges[4].id.clone();
        plan.nodes[3].pos = Point::new(0.0, -2.0);
        let d = validate(&plan, &CompileOptions::default());
        assert!(d.len() >= 5, "{d:?}");
    }

    fn arbitrary_plan() -> impl Strategy<Value = NetworkPlan> {
        (3usize..7, any::<u64>()).prop_map(|(n, seed)| {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(seed);
            let nodes: Vec<_> = (0..n)
                .map(|i| {
                    let a = i as f64 / n as f64 * std::f64::consts::TAU;
                    node(&format!("n{i}"), 100.0 * a.cos(), 100.0 * a.sin())
                })
                .collect();
            let mut edges = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    if i != j && rng.gen_bool(0.4) {
                        edges.push(edge(&format!("e{i}_{j}"), &format!("n{i}"), &format!("n{j}"), rng.gen_range(1..4), 10.0));
                    }
                }
            }
            if edges.is_empty() {
                edges.push(edge("e0_1", "n0", "n1", 1, 10.0));
            }
            NetworkPlan { nodes, edges }
        })
    }

    proptest! {
        #[test]
        fn compiled_networks_are_closed(plan in arbitrary_plan()) {
            let o = CompileOptions::default();
            let net = compile(&plan, &o).unwrap();
            prop_assert!(net.check_closure().is_empty());
            for c in &net.connections {
                let f = net.edge(&c.from_edge).unwrap();
                let t = net.edge(&c.to_edge).unwrap();
                if f.is_reverse_of(t) {
                    prop_assert!(net.outgoing(&f.to).all(|o| o.is_reverse_of(f)));
                }
            }
            let again = compile(&reconstruct_plan(&net, o.lane_width), &o).unwrap();
            prop_assert_eq!(
                net.connections.iter().cloned().collect::<HashSet<_>>(),
                again.connections.iter().cloned().collect::<HashSet<_>>()
            );
        }

        #[test]
        fn k_faults_give_k_diagnostics(plan in arbitrary_plan(), k in 1usize..4) {
            let mut plan = plan;
            let o = CompileOptions::default();
            prop_assume!(plan.edges.len() >= k);
            for i in 0..k {
                plan.edges[i].speed = -1.0;
            }
            prop_assert!(validate(&plan, &o).len() >= k);
        }
    }
}
