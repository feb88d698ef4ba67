use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CompileOptions;
use crate::geometry::{end_heading, normalize_deg, signed_delta_deg, start_heading};
use crate::net::{CompiledEdge, CompiledNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneType {
    TIntersection,
    YIntersection,
    FourWay,
    Fork,
    Merge,
    Ramp,
    General,
}

impl SceneType {
    pub const ALL: [SceneType; 7] = [
        SceneType::TIntersection,
        SceneType::YIntersection,
        SceneType::FourWay,
        SceneType::Fork,
        SceneType::Merge,
        SceneType::Ramp,
        SceneType::General,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SceneType::TIntersection => "t_intersection",
            SceneType::YIntersection => "y_intersection",
            SceneType::FourWay => "four_way",
            SceneType::Fork => "fork",
            SceneType::Merge => "merge",
            SceneType::Ramp => "ramp",
            SceneType::General => "general",
        }
    }
}

impl fmt::Display for SceneType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SceneType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        SceneType::ALL
            .into_iter()
            .find(|t| t.as_str() == norm)
            .ok_or_else(|| format!("unknown scene type '{s}'"))
    }
}

/// One road at a junction: a single edge, or an approach/exit pair of
/// mutually reverse edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Road {
    pub edges: Vec<String>,
    pub incoming: bool,
    pub outgoing: bool,
    /// Direction pointing away from the junction.
    pub heading: f64,
    pub speed: f64,
    pub lanes: u32,
}

impl Road {
    pub fn is_pair(&self) -> bool {
        self.edges.len() == 2
    }

    pub fn capacity(&self) -> f64 {
        self.speed * self.lanes as f64
    }

    pub fn id(&self) -> &str {
        self.edges.iter().min().map(String::as_str).unwrap_or("")
    }
}

fn heading_away(e: &CompiledEdge, junction: &str) -> f64 {
    let shape = e.lanes.first().map(|l| l.shape.as_slice()).unwrap_or(&[]);
    if e.from == junction {
        start_heading(shape).unwrap_or(0.0)
    } else {
        normalize_deg(end_heading(shape).unwrap_or(0.0) + 180.0)
    }
}

/// Roads incident to `junction`, in edge order.
pub fn junction_roads(edges: &[CompiledEdge], junction: &str) -> Vec<Road> {
    let incident: Vec<&CompiledEdge> = edges.iter().filter(|e| e.from == junction || e.to == junction).collect();
    let mut used = vec![false; incident.len()];
    let mut roads = Vec::new();
    for i in 0..incident.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let e = incident[i];
        let mut members = vec![e];
        if let Some(j) = (i + 1..incident.len()).find(|&j| !used[j] && incident[j].is_reverse_of(e)) {
            used[j] = true;
            members.push(incident[j]);
        }
        let exit = members.iter().find(|m| m.from == junction).copied();
        let reference = exit.unwrap_or(e);
        roads.push(Road {
            edges: members.iter().map(|m| m.id.clone()).collect(),
            incoming: members.iter().any(|m| m.to == junction),
            outgoing: exit.is_some(),
            heading: heading_away(reference, junction),
            speed: members.iter().map(|m| m.speed()).fold(0.0, f64::max),
            lanes: members.iter().map(|m| m.num_lanes()).max().unwrap_or(0),
        });
    }
    roads
}

fn major_minor<'a>(a: &'a Road, b: &'a Road) -> (&'a Road, &'a Road) {
    let (ca, cb) = (a.capacity(), b.capacity());
    if ca > cb || (ca == cb && a.id() <= b.id()) {
        (a, b)
    } else {
        (b, a)
    }
}

/// Rule cascade on the first junction of maximal degree.
pub fn classify_scene(net: &CompiledNetwork, opts: &CompileOptions) -> SceneType {
    let mut best: Option<Vec<Road>> = None;
    for j in &net.junctions {
        let roads = junction_roads(&net.edges, &j.id);
        if best.as_ref().is_none_or(|b| roads.len() > b.len()) {
            best = Some(roads);
        }
    }
    let Some(roads) = best else {
        return SceneType::General;
    };
    let degree = roads.len();
    if degree >= 4 {
        return SceneType::FourWay;
    }
    if degree == 3 && roads.iter().all(|r| !r.is_pair()) {
        let ins: Vec<&Road> = roads.iter().filter(|r| r.incoming).collect();
        let outs: Vec<&Road> = roads.iter().filter(|r| r.outgoing).collect();
        let branches = match (ins.len(), outs.len()) {
            (1, 2) => Some((SceneType::Fork, outs)),
            (2, 1) => Some((SceneType::Merge, ins)),
            _ => None,
        };
        if let Some((kind, pair)) = branches {
            let (major, minor) = major_minor(pair[0], pair[1]);
            let angle = signed_delta_deg(major.heading, minor.heading).abs();
            if angle < opts.straight_threshold_deg && major.speed >= 25.0 {
                return SceneType::Ramp;
            }
            return kind;
        }
    }
    if degree == 3 {
        let opposite = |a: &Road, b: &Road| {
            signed_delta_deg(a.heading, b.heading).abs() >= 180.0 - opts.straight_threshold_deg
        };
        let t = (0..3).any(|i| (i + 1..3).any(|k| opposite(&roads[i], &roads[k])));
        return if t { SceneType::TIntersection } else { SceneType::YIntersection };
    }
    SceneType::General
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::compile;
    use crate::compiler::testnets::*;
    use crate::net::NetworkPlan;

    fn plan_with_arms(headings: &[f64], pairs: bool) -> NetworkPlan {
        let mut plan = NetworkPlan { nodes: vec![node("c", 0.0, 0.0)], edges: Vec::new() };
        for (i, h) in headings.iter().enumerate() {
            let a = h.to_radians();
            let id = format!("a{i}");
            plan.nodes.push(node(&id, 100.0 * a.cos(), 100.0 * a.sin()));
            plan.edges.push(edge(&format!("{id}_in"), &id, "c", 2, 13.89));
            if pairs {
                plan.edges.push(edge(&format!("{id}_out"), "c", &id, 2, 13.89));
            }
        }
        plan
    }

    fn scene(plan: &NetworkPlan) -> SceneType {
        let o = CompileOptions::default();
        classify_scene(&compile(plan, &o).unwrap(), &o)
    }

    #[test]
    fn intersections() {
        assert_eq!(scene(&plan_with_arms(&[0.0, 90.0, 180.0, 270.0], true)), SceneType::FourWay);
        assert_eq!(scene(&plan_with_arms(&[0.0, 120.0, 240.0], true)), SceneType::YIntersection);
        assert_eq!(scene(&t_plan()), SceneType::TIntersection);
        assert_eq!(scene(&plan_with_arms(&[0.0, 180.0], true)), SceneType::General);
    }

    fn fork_plan(spread: f64, main_speed: f64, main_lanes: u32) -> NetworkPlan {
        let a = spread.to_radians();
        NetworkPlan {
            nodes: vec![
                node("s", -100.0, 0.0),
                node("c", 0.0, 0.0),
                node("l", 100.0 * a.cos(), 100.0 * a.sin()),
                node("r", 100.0 * a.cos(), -100.0 * a.sin()),
            ],
            edges: vec![
                edge("in", "s", "c", 2, main_speed),
                edge("left", "c", "l", main_lanes, main_speed),
                edge("right", "c", "r", 1, 15.0),
            ],
        }
    }

    #[test]
    fn fork_merge_ramp() {
        assert_eq!(scene(&fork_plan(20.0, 13.89, 1)), SceneType::Fork);
        assert_eq!(scene(&fork_plan(8.0, 30.0, 2)), SceneType::Ramp);
        // fast but wide apart stays a fork
        assert_eq!(scene(&fork_plan(40.0, 30.0, 2)), SceneType::Fork);
        let mut merge = fork_plan(20.0, 13.89, 1);
        for e in &mut merge.edges {
            std::mem::swap(&mut e.from, &mut e.to);
        }
        assert_eq!(scene(&merge), SceneType::Merge);
    }

    #[test]
    fn parse_names() {
        assert_eq!("T-intersection".parse::<SceneType>(), Ok(SceneType::TIntersection));
        assert_eq!("four way".parse::<SceneType>(), Ok(SceneType::FourWay));
        assert!("circle".parse::<SceneType>().is_err());
    }
}
