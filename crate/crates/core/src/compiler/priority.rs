//! Right-of-way at junctions. Not serialized; recomputed from the network.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::connections_by_junction;
use crate::geometry::{point_at, segments_intersect, Point};
use crate::net::{CompiledNetwork, Connection, Direction};

pub fn connection_id(c: &Connection) -> String {
    format!("{}_{}->{}_{}", c.from_edge, c.from_lane, c.to_edge, c.to_lane)
}

#[derive(Debug, Clone, Default)]
pub struct JunctionRules {
    /// Distance from the junction center to the farthest shape point.
    pub radius: f64,
    /// Connection indices, highest priority first.
    pub order: Vec<usize>,
    pub conflicts: BTreeSet<(usize, usize)>,
}

#[derive(Debug, Clone, Default)]
pub struct RightOfWay {
    pub junctions: BTreeMap<String, JunctionRules>,
    junction_of: HashMap<usize, String>,
    rank: HashMap<usize, usize>,
}

fn direction_rank(d: Direction) -> u8 {
    match d {
        Direction::Straight | Direction::Right => 0,
        Direction::Left => 1,
        Direction::Turn => 2,
    }
}

/// Straight chord across the junction that a vehicle on `c` sweeps.
fn chord(net: &CompiledNetwork, c: &Connection, r: f64) -> Option<(Point, Point)> {
    let from = net.edge(&c.from_edge)?.lanes.get(c.from_lane as usize)?;
    let to = net.edge(&c.to_edge)?.lanes.get(c.to_lane as usize)?;
    Some((point_at(&from.shape, from.length - r), point_at(&to.shape, r)))
}

impl RightOfWay {
    pub fn new(net: &CompiledNetwork) -> Self {
        let mut out = RightOfWay::default();
        for (jid, conns) in connections_by_junction(net) {
            let radius = net
                .junction(&jid)
                .map(|j| j.shape.iter().map(|p| p.distance(&j.pos)).fold(0.0, f64::max))
                .unwrap_or(0.0);
            let capacity = |edge: &str| net.edge(edge).map_or(0.0, |e| e.speed() * e.num_lanes() as f64);
            let best = net.incoming(&jid).map(|e| capacity(&e.id)).fold(0.0, f64::max);
            let mut order = conns.clone();
            order.sort_by_key(|&i| {
                let c = &net.connections[i];
                let major = capacity(&c.from_edge) >= best - 1e-9;
                (!major, direction_rank(c.direction), connection_id(c))
            });
            let chords: Vec<Option<(Point, Point)>> =
                conns.iter().map(|&i| chord(net, &net.connections[i], radius)).collect();
            let mut conflicts = BTreeSet::new();
            for (a_pos, &a) in conns.iter().enumerate() {
                for (b_pos, &b) in conns.iter().enumerate().skip(a_pos + 1) {
                    let (ca, cb) = (&net.connections[a], &net.connections[b]);
                    if ca.from_edge == cb.from_edge && ca.from_lane == cb.from_lane {
                        continue;
                    }
                    let merge = ca.to_edge == cb.to_edge && ca.to_lane == cb.to_lane;
                    let cross = match (chords[a_pos], chords[b_pos]) {
                        (Some((p1, p2)), Some((q1, q2))) => segments_intersect(&p1, &p2, &q1, &q2),
                        _ => false,
                    };
                    if merge || cross {
                        conflicts.insert((a.min(b), a.max(b)));
                    }
                }
            }
            for (rank, &i) in order.iter().enumerate() {
                out.rank.insert(i, rank);
                out.junction_of.insert(i, jid.clone());
            }
            out.junctions.insert(jid, JunctionRules { radius, order, conflicts });
        }
        out
    }

    pub fn junction_of(&self, conn: usize) -> Option<&str> {
        self.junction_of.get(&conn).map(String::as_str)
    }

    pub fn radius(&self, junction: &str) -> f64 {
        self.junctions.get(junction).map_or(0.0, |j| j.radius)
    }

    pub fn rank(&self, conn: usize) -> usize {
        self.rank.get(&conn).copied().unwrap_or(usize::MAX)
    }

    pub fn conflicts(&self, a: usize, b: usize) -> bool {
        let (Some(ja), Some(jb)) = (self.junction_of(a), self.junction_of(b)) else {
            return false;
        };
        ja == jb && self.junctions[ja].conflicts.contains(&(a.min(b), a.max(b)))
    }

    /// True when a vehicle on `a` must give way to one on `b`.
    pub fn yields_to(&self, a: usize, b: usize) -> bool {
        self.conflicts(a, b) && self.rank(b) < self.rank(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::testnets::*;
    use crate::compiler::{compile, CompileOptions};

    #[test]
    fn t_junction_priorities() {
        let mut plan = t_plan();
        // side road is slower
        for e in plan.edges.iter_mut().filter(|e| e.id.starts_with('s')) {
            e.speed = 8.0;
        }
        let net = compile(&plan, &CompileOptions::default()).unwrap();
        let row = RightOfWay::new(&net);
        let find = |f: &str, fl: u32, t: &str| {
            net.connections
                .iter()
                .position(|c| c.from_edge == f && c.from_lane == fl && c.to_edge == t)
                .unwrap()
        };
        let main_straight = find("w_in", 0, "e_out");
        let side_left = find("s_in", 0, "w_out");
        let side_right = find("s_in", 1, "e_out");
        assert!(row.radius("c") > 0.0);
        assert!(row.conflicts(main_straight, side_left));
        assert!(row.yields_to(side_left, main_straight));
        assert!(!row.yields_to(main_straight, side_left));
        // same target lane counts as a conflict
        assert!(row.conflicts(side_right, find("w_in", 1, "e_out")));
        // same incoming lane never conflicts
        assert!(!row.conflicts(main_straight, find("w_in", 0, "s_out")));
        let order = &row.junctions["c"].order;
        assert!(net.connections[order[0]].from_edge != "s_in");
    }
}
