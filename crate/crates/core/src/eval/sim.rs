//! Time-stepped single-lane-per-vehicle simulation: IDM car following,
//! rank-based yielding at junction entries and optional AV lane changes.

use std::collections::HashMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EvalError, Scenario};
use crate::compiler::RightOfWay;

/// Hard braking limit, m/s^2.
const EMERGENCY_DECEL: f64 = 9.0;
/// Vehicle type speed cap, m/s.
const MAX_SPEED: f64 = 33.33;
const LOOKAHEAD: f64 = 300.0;
/// Distance from the junction entry inside which yielding is considered.
const YIELD_RANGE: f64 = 100.0;
const LANE_CHANGE_GAIN: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdmParams {
    pub a_max: f64,
    pub b_comf: f64,
    pub headway: f64,
    pub min_gap: f64,
    pub veh_length: f64,
    pub delta: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self { a_max: 2.0, b_comf: 3.0, headway: 1.2, min_gap: 2.0, veh_length: 5.0, delta: 4.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub idm: IdmParams,
    pub junction_yield_headway: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { dt: 0.1, horizon: 120.0, idm: IdmParams::default(), junction_yield_headway: 3.0 }
    }
}

impl SimConfig {
    pub fn check(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::Config(m));
        if !(self.dt > 0.0) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.horizon > self.dt) || !self.horizon.is_finite() {
            return bad(format!("horizon must exceed dt, got {}", self.horizon));
        }
        let p = &self.idm;
        for (name, v) in [
            ("a_max", p.a_max),
            ("b_comf", p.b_comf),
            ("headway", p.headway),
            ("min_gap", p.min_gap),
            ("veh_length", p.veh_length),
            ("delta", p.delta),
            ("junction_yield_headway", self.junction_yield_headway),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be > 0, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AvPolicy {
    #[default]
    IdmFollow,
    IdmWithLaneChange,
}

impl FromStr for AvPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "idm_follow" => Ok(AvPolicy::IdmFollow),
            "idm_with_lane_change" => Ok(AvPolicy::IdmWithLaneChange),
            other => Err(format!("unknown AV policy '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeaderInfo {
    /// bumper-to-bumper, m
    pub gap: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: String,
    pub route_index: usize,
    pub edge: String,
    pub lane: u32,
    /// Front bumper position along the lane.
    pub offset: f64,
    pub speed: f64,
    pub accel: f64,
    pub active: bool,
    pub leader: Option<LeaderInfo>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Depart,
    Arrive,
    Collision,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub time: f64,
    pub kind: EventKind,
    pub vehicles: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub time: f64,
    pub states: Vec<VehicleState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub dt: f64,
    pub horizon: f64,
    pub steps: Vec<TraceStep>,
    pub events: Vec<SimEvent>,
}

impl Trace {
    pub fn events_of<'a>(&'a self, vehicle: &'a str) -> impl Iterator<Item = &'a SimEvent> + 'a {
        self.events.iter().filter(move |e| e.vehicles.iter().any(|v| v == vehicle))
    }

    pub fn first_event(&self, vehicle: &str, kind: EventKind) -> Option<&SimEvent> {
        self.events.iter().find(|e| e.kind == kind && e.vehicles.iter().any(|v| v == vehicle))
    }

    pub fn states_of<'a>(&'a self, vehicle: &'a str) -> impl Iterator<Item = (f64, &'a VehicleState)> + 'a {
        self.steps
            .iter()
            .filter_map(move |s| s.states.iter().find(|v| v.id == vehicle).map(|v| (s.time, v)))
    }

    /// sha256 over the JSON encoding.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("trace serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Pending,
    Active,
    Done,
}

#[derive(Debug, Clone)]
struct Veh {
    id: String,
    route: Vec<usize>,
    depart: f64,
    is_av: bool,
    status: Status,
    ri: usize,
    lane: usize,
    s: f64,
    v: f64,
    a: f64,
    /// Connection used to enter the current lane.
    via: Option<usize>,
    leader: Option<LeaderInfo>,
}

enum Next {
    Arrive,
    Via(usize),
    /// The lane has no connection toward the next route edge.
    Blocked,
}

struct World<'a> {
    scenario: &'a Scenario,
    cfg: &'a SimConfig,
    row: RightOfWay,
    lane_len: Vec<Vec<f64>>,
    lane_speed: Vec<Vec<f64>>,
    conn: HashMap<(usize, usize, usize), usize>,
    /// (edge, lane) of each connection's target.
    conn_to: Vec<(usize, usize)>,
}

impl<'a> World<'a> {
    fn new(scenario: &'a Scenario, cfg: &'a SimConfig) -> Self {
        let net = &scenario.network;
        let index = net.edge_index();
        let mut conn = HashMap::new();
        let mut conn_to = Vec::with_capacity(net.connections.len());
        for (i, c) in net.connections.iter().enumerate() {
            let (f, t) = (index[c.from_edge.as_str()], index[c.to_edge.as_str()]);
            conn.entry((f, c.from_lane as usize, t)).or_insert(i);
            conn_to.push((t, c.to_lane as usize));
        }
        Self {
            scenario,
            cfg,
            row: RightOfWay::new(net),
            lane_len: net.edges.iter().map(|e| e.lanes.iter().map(|l| l.length).collect()).collect(),
            lane_speed: net.edges.iter().map(|e| e.lanes.iter().map(|l| l.speed.min(MAX_SPEED)).collect()).collect(),
            conn,
            conn_to,
        }
    }

    fn next(&self, v: &Veh, ri: usize, lane: usize) -> Next {
        if ri + 1 >= v.route.len() {
            return Next::Arrive;
        }
        match self.conn.get(&(v.route[ri], lane, v.route[ri + 1])) {
            Some(&c) => Next::Via(c),
            None => Next::Blocked,
        }
    }

    fn stop_line(&self, edge: usize, lane: usize, c: usize) -> f64 {
        let r = self.row.junction_of(c).map_or(0.0, |j| self.row.radius(j));
        (self.lane_len[edge][lane] - r).max(0.0)
    }

    fn idm(&self, v: f64, v0: f64, obstacle: Option<(f64, f64)>) -> f64 {
        let p = &self.cfg.idm;
        let free = 1.0 - (v / v0.max(0.1)).powf(p.delta);
        let acc = match obstacle {
            None => p.a_max * free,
            Some((gap, vl)) => {
                let s_star = p.min_gap + (v * p.headway + v * (v - vl) / (2.0 * (p.a_max * p.b_comf).sqrt())).max(0.0);
                p.a_max * (free - (s_star / gap.max(0.01)).powi(2))
            }
        };
        acc.max(-EMERGENCY_DECEL)
    }
}

struct Occupancy {
    by_lane: HashMap<(usize, usize), Vec<usize>>,
}

impl Occupancy {
    fn build(vehs: &[Veh]) -> Self {
        let mut by_lane: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (i, v) in vehs.iter().enumerate().filter(|(_, v)| v.status == Status::Active) {
            by_lane.entry((v.route[v.ri], v.lane)).or_default().push(i);
        }
        Self { by_lane }
    }

    fn on(&self, edge: usize, lane: usize) -> &[usize] {
        self.by_lane.get(&(edge, lane)).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Nearest vehicle ahead of `me` along its path when placed at (`lane`, `s`)
/// of its current edge, plus the distance to a blocking lane end if any.
fn look_ahead(w: &World, vehs: &[Veh], occ: &Occupancy, me: usize, lane: usize, s: f64) -> (Option<(f64, usize)>, Option<f64>) {
    let v = &vehs[me];
    let len = w.cfg.idm.veh_length;
    let (mut edge, mut lane, mut ri) = (v.route[v.ri], lane, v.ri);
    let mut base = -s;
    let mut first = true;
    loop {
        let mut best: Option<(f64, usize)> = None;
        for &j in occ.on(edge, lane) {
            if j == me {
                continue;
            }
            let sj = vehs[j].s;
            if first && (sj < s || (sj == s && j > me)) {
                continue;
            }
            let d = base + sj;
            if best.is_none_or(|(bd, bj)| d < bd || (d == bd && j < bj)) {
                best = Some((d, j));
            }
        }
        if let Some((d, j)) = best {
            return (Some((d - len, j)), None);
        }
        let remaining = base + w.lane_len[edge][lane];
        if remaining > LOOKAHEAD {
            return (None, None);
        }
        match w.next(v, ri, lane) {
            Next::Arrive => return (None, None),
            Next::Blocked => return (None, Some(remaining)),
            Next::Via(c) => {
                (edge, lane) = w.conn_to[c];
                ri += 1;
                base = remaining;
                first = false;
            }
        }
    }
}

/// The connection a vehicle is about to take and its distance to that
/// junction's entry (negative once inside).
fn approach(w: &World, v: &Veh) -> Option<(usize, f64)> {
    match w.next(v, v.ri, v.lane) {
        Next::Via(c) => Some((c, w.stop_line(v.route[v.ri], v.lane, c) - v.s)),
        _ => None,
    }
}

fn inside_exit(w: &World, v: &Veh, via: usize) -> bool {
    let r = w.row.junction_of(via).map_or(0.0, |j| w.row.radius(j));
    v.s < r
}

/// Connection whose junction zone the vehicle currently occupies.
fn occupied_connection(w: &World, v: &Veh) -> Option<usize> {
    if let Some(via) = v.via {
        if inside_exit(w, v, via) {
            return Some(via);
        }
    }
    match w.next(v, v.ri, v.lane) {
        Next::Via(c) if v.s > w.stop_line(v.route[v.ri], v.lane, c) => Some(c),
        _ => None,
    }
}

/// Distance to the junction entry when the vehicle must wait there.
fn yield_gap(w: &World, vehs: &[Veh], me: usize, lane: usize, s: f64) -> Option<f64> {
    let v = &vehs[me];
    let edge = v.route[v.ri];
    let Next::Via(c) = w.next(v, v.ri, lane) else {
        return None;
    };
    let dist = w.stop_line(edge, lane, c) - s;
    if !(0.0..=YIELD_RANGE).contains(&dist) {
        return None;
    }
    if v.v * v.v / (2.0 * EMERGENCY_DECEL) > dist {
        return None;
    }
    let must_wait = vehs.iter().enumerate().any(|(j, o)| {
        if j == me || o.status != Status::Active {
            return false;
        }
        if let Some(oc) = occupied_connection(w, o) {
            if oc != c && w.row.conflicts(c, oc) {
                return true;
            }
        }
        match approach(w, o) {
            Some((oc, d)) if d >= 0.0 && oc != c && w.row.yields_to(c, oc) => {
                d / o.v.max(0.1) <= w.cfg.junction_yield_headway
            }
            _ => false,
        }
    });
    must_wait.then_some(dist)
}

fn accel_on(w: &World, vehs: &[Veh], occ: &Occupancy, me: usize, lane: usize, s: f64) -> (f64, Option<(f64, usize)>) {
    let v = &vehs[me];
    let edge = v.route[v.ri];
    let v0 = w.lane_speed[edge][lane];
    let (leader, blocked) = look_ahead(w, vehs, occ, me, lane, s);
    let mut a = w.idm(v.v, v0, leader.map(|(g, j)| (g, vehs[j].v)));
    if let Some(g) = blocked {
        a = a.min(w.idm(v.v, v0, Some((g, 0.0))));
    }
    if let Some(g) = yield_gap(w, vehs, me, lane, s) {
        a = a.min(w.idm(v.v, v0, Some((g, 0.0))));
    }
    (a, leader)
}

/// Nearest vehicle at or behind `s` on the lane, with its rear gap.
fn follower(w: &World, vehs: &[Veh], occ: &Occupancy, me: usize, edge: usize, lane: usize, s: f64) -> Option<(f64, usize)> {
    occ.on(edge, lane)
        .iter()
        .filter(|&&j| j != me && vehs[j].s <= s)
        .map(|&j| (s - vehs[j].s - w.cfg.idm.veh_length, j))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
}

fn try_lane_change(w: &World, vehs: &[Veh], occ: &Occupancy, me: usize) -> Option<(usize, f64)> {
    let v = &vehs[me];
    let edge = v.route[v.ri];
    if occupied_connection(w, v).is_some() {
        return None;
    }
    let p = &w.cfg.idm;
    let (a_cur, _) = accel_on(w, vehs, occ, me, v.lane, v.s);
    let mut best: Option<(usize, f64, f64)> = None;
    let lanes = w.lane_len[edge].len();
    for target in [v.lane.checked_sub(1), Some(v.lane + 1)].into_iter().flatten() {
        if target >= lanes {
            continue;
        }
        let s = v.s * w.lane_len[edge][target] / w.lane_len[edge][v.lane];
        let (a_new, leader) = accel_on(w, vehs, occ, me, target, s);
        if a_new - a_cur <= LANE_CHANGE_GAIN {
            continue;
        }
        if leader.is_some_and(|(g, _)| g < p.min_gap) {
            continue;
        }
        if let Some((g, j)) = follower(w, vehs, occ, me, edge, target, s) {
            if g < p.min_gap + vehs[j].v * p.headway {
                continue;
            }
        }
        if best.is_none_or(|(_, _, a)| a_new > a) {
            best = Some((target, s, a_new));
        }
    }
    best.map(|(l, s, _)| (l, s))
}

fn state(w: &World, v: &Veh) -> VehicleState {
    let edge = v.route[v.ri];
    VehicleState {
        id: v.id.clone(),
        route_index: v.ri,
        edge: w.scenario.network.edges[edge].id.clone(),
        lane: v.lane as u32,
        offset: v.s,
        speed: v.v,
        accel: v.a,
        active: v.status == Status::Active,
        leader: v.leader,
    }
}

/// Inserts a pending vehicle at the start of its first edge, preferring
/// lanes that continue along its route. Returns false when no lane has room.
fn insert(w: &World, vehs: &mut [Veh], occ: &Occupancy, me: usize) -> bool {
    let p = w.cfg.idm;
    let v = &vehs[me];
    let edge = v.route[0];
    let lanes = w.lane_len[edge].len();
    let good = |l: usize| !matches!(w.next(v, 0, l), Next::Blocked);
    let order: Vec<usize> = (0..lanes).filter(|&l| good(l)).chain((0..lanes).filter(|&l| !good(l))).collect();
    for lane in order {
        let ahead = occ.on(edge, lane).iter().map(|&j| vehs[j].s).fold(f64::INFINITY, f64::min);
        let gap = ahead - p.veh_length;
        if gap < p.min_gap {
            continue;
        }
        let v0 = w.lane_speed[edge][lane];
        let speed = if gap.is_finite() { ((gap - p.min_gap) / p.headway).clamp(0.0, v0) } else { v0 };
        let v = &mut vehs[me];
        v.lane = lane;
        v.s = 0.0;
        v.v = speed;
        v.a = 0.0;
        v.status = Status::Active;
        return true;
    }
    false
}

pub fn simulate(scenario: &Scenario, cfg: &SimConfig, av_policy: AvPolicy) -> Result<Trace, EvalError> {
    cfg.check()?;
    let diags = scenario.validate();
    if !diags.is_empty() {
        return Err(EvalError::InvalidScenario(diags));
    }
    let w = World::new(scenario, cfg);
    let index = scenario.network.edge_index();
    let mut order: Vec<usize> = (0..scenario.routes.len()).collect();
    order.sort_by(|&a, &b| scenario.routes[a].depart_time.total_cmp(&scenario.routes[b].depart_time).then(a.cmp(&b)));
    let mut vehs: Vec<Veh> = order
        .iter()
        .map(|&i| {
            let r = &scenario.routes[i];
            Veh {
                id: r.vehicle_id.clone(),
                route: r.edges.iter().map(|e| index[e.as_str()]).collect(),
                depart: r.depart_time,
                is_av: r.vehicle_id == scenario.av_id,
                status: Status::Pending,
                ri: 0,
                lane: 0,
                s: 0.0,
                v: 0.0,
                a: 0.0,
                via: None,
                leader: None,
            }
        })
        .collect();

    let mut trace = Trace { dt: cfg.dt, horizon: cfg.horizon, steps: Vec::new(), events: Vec::new() };
    let steps = (cfg.horizon / cfg.dt).round() as usize;
    for k in 0..steps {
        let t = k as f64 * cfg.dt;
        let t_next = (k + 1) as f64 * cfg.dt;

        for i in 0..vehs.len() {
            if vehs[i].status == Status::Pending && vehs[i].depart <= t + 1e-9 {
                let occ = Occupancy::build(&vehs);
                if insert(&w, &mut vehs, &occ, i) {
                    trace.events.push(SimEvent { time: t, kind: EventKind::Depart, vehicles: vec![vehs[i].id.clone()] });
                }
            }
        }

        if av_policy == AvPolicy::IdmWithLaneChange {
            if let Some(i) = vehs.iter().position(|v| v.is_av && v.status == Status::Active) {
                let occ = Occupancy::build(&vehs);
                if let Some((lane, s)) = try_lane_change(&w, &vehs, &occ, i) {
                    vehs[i].lane = lane;
                    vehs[i].s = s;
                }
            }
        }

        let occ = Occupancy::build(&vehs);
        let accels: Vec<Option<f64>> = (0..vehs.len())
            .map(|i| (vehs[i].status == Status::Active).then(|| accel_on(&w, &vehs, &occ, i, vehs[i].lane, vehs[i].s).0))
            .collect();

        let mut finished = Vec::new();
        for (i, a) in accels.into_iter().enumerate() {
            let Some(a) = a else { continue };
            let v = &mut vehs[i];
            let v_new = (v.v + a * cfg.dt).max(0.0);
            v.s += 0.5 * (v.v + v_new) * cfg.dt;
            v.v = v_new;
            v.a = a;
            loop {
                let edge = v.route[v.ri];
                let len = w.lane_len[edge][v.lane];
                if v.s < len {
                    break;
                }
                match w.next(v, v.ri, v.lane) {
                    Next::Arrive => {
                        v.s = len;
                        v.status = Status::Done;
                        finished.push(i);
                        break;
                    }
                    Next::Blocked => {
                        v.s = len;
                        v.v = 0.0;
                        break;
                    }
                    Next::Via(c) => {
                        v.s -= len;
                        v.ri += 1;
                        (_, v.lane) = w.conn_to[c];
                        v.via = Some(c);
                    }
                }
            }
        }
        for &i in &finished {
            trace.events.push(SimEvent { time: t_next, kind: EventKind::Arrive, vehicles: vec![vehs[i].id.clone()] });
        }

        let occ = Occupancy::build(&vehs);
        let mut crashed = vec![false; vehs.len()];
        let mut pairs = Vec::new();
        for i in 0..vehs.len() {
            if vehs[i].status != Status::Active {
                continue;
            }
            let (leader, _) = look_ahead(&w, &vehs, &occ, i, vehs[i].lane, vehs[i].s);
            vehs[i].leader = leader.map(|(gap, j)| LeaderInfo { gap, speed: vehs[j].v });
            if let Some((gap, j)) = leader {
                if gap < 0.0 {
                    pairs.push((i.min(j), i.max(j)));
                }
            }
        }
        let inside: Vec<(usize, usize)> = (0..vehs.len())
            .filter(|&i| vehs[i].status == Status::Active)
            .filter_map(|i| occupied_connection(&w, &vehs[i]).map(|c| (i, c)))
            .collect();
        for (x, &(i, ci)) in inside.iter().enumerate() {
            for &(j, cj) in &inside[x + 1..] {
                if ci != cj && w.row.conflicts(ci, cj) {
                    pairs.push((i.min(j), i.max(j)));
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        for (i, j) in pairs {
            if crashed[i] || crashed[j] {
                continue;
            }
            crashed[i] = true;
            crashed[j] = true;
            trace.events.push(SimEvent {
                time: t_next,
                kind: EventKind::Collision,
                vehicles: vec![vehs[i].id.clone(), vehs[j].id.clone()],
            });
        }
        for (i, v) in vehs.iter_mut().enumerate() {
            if crashed[i] {
                v.v = 0.0;
                v.status = Status::Done;
                finished.push(i);
            }
        }

        let states = vehs
            .iter()
            .enumerate()
            .filter(|(i, v)| v.status == Status::Active || finished.contains(i))
            .map(|(_, v)| state(&w, v))
            .collect();
        trace.steps.push(TraceStep { time: t_next, states });

        if vehs.iter().all(|v| v.status == Status::Done) {
            return Ok(trace);
        }
    }
    let left: Vec<String> = vehs.iter().filter(|v| v.status != Status::Done).map(|v| v.id.clone()).collect();
    if !left.is_empty() {
        trace.events.push(SimEvent { time: steps as f64 * cfg.dt, kind: EventKind::Timeout, vehicles: left });
    }
    Ok(trace)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::compiler::testnets::*;
    use crate::compiler::{compile, CompileOptions};
    use crate::net::{parse_net, parse_routes, CompiledNetwork, NetworkPlan, Route};
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    pub const CROWDED_FORK_NET: &str = include_str!("../../fixtures/sim/crowded_fork.net.xml");
    pub const CROWDED_FORK_ROUTES: &str = include_str!("../../fixtures/sim/crowded_fork.rou.xml");

    pub fn crowded_fork() -> Scenario {
        let network = parse_net(CROWDED_FORK_NET).unwrap().network;
        let set = parse_routes(CROWDED_FORK_ROUTES).unwrap();
        Scenario {
            network,
            routes: set.routes,
            av_id: set.av_id.unwrap(),
            description: None,
            request: "crowded fork".into(),
        }
    }

    pub fn scenario(net: CompiledNetwork, routes: &[(&str, &[&str], f64)], av: &str) -> Scenario {
        Scenario {
            network: net,
            routes: routes
                .iter()
                .map(|(id, edges, t)| Route {
                    vehicle_id: id.to_string(),
                    edges: edges.iter().map(|e| e.to_string()).collect(),
                    depart_time: *t,
                })
                .collect(),
            av_id: av.into(),
            description: None,
            request: String::new(),
        }
    }

    fn straight(len: f64, speeds: &[f64]) -> CompiledNetwork {
        let mut plan = NetworkPlan { nodes: vec![node("n0", 0.0, 0.0)], edges: Vec::new() };
        for (i, v) in speeds.iter().enumerate() {
            plan.nodes.push(node(&format!("n{}", i + 1), len * (i + 1) as f64, 0.0));
            plan.edges.push(edge(&format!("e{i}"), &format!("n{i}"), &format!("n{}", i + 1), 1, *v));
        }
        compile(&plan, &CompileOptions::default()).unwrap()
    }

    fn collisions(trace: &Trace) -> usize {
        trace.events.iter().filter(|e| e.kind == EventKind::Collision).count()
    }

    #[test]
    fn idm_free_flow_converges_from_rest() {
        let s = scenario(straight(100.0, &[13.89]), &[("a", &["e0"], 0.0)], "a");
        let cfg = SimConfig::default();
        let w = World::new(&s, &cfg);
        let mut v = 0.0;
        for _ in 0..600 {
            v = (v + w.idm(v, 13.89, None) * cfg.dt).max(0.0);
        }
        assert!((v - 13.89).abs() < 0.01, "{v}");
    }

    #[test]
    fn lone_vehicle_cruises_and_arrives() {
        let s = scenario(straight(500.0, &[13.89]), &[("a", &["e0"], 0.0)], "a");
        let trace = simulate(&s, &SimConfig::default(), AvPolicy::IdmFollow).unwrap();
        let (_, last) = trace.states_of("a").last().unwrap();
        assert!((last.speed - 13.89).abs() < 0.01);
        assert!(!last.active);
        assert_eq!(collisions(&trace), 0);
        let arrive = trace.first_event("a", EventKind::Arrive).unwrap();
        assert!((arrive.time - 500.0 / 13.89).abs() < 0.2, "{}", arrive.time);
        assert!(trace.steps.windows(2).all(|w| w[1].time > w[0].time));
    }

    #[test]
    fn platoons_never_overlap() {
        let net = straight(300.0, &[25.0, 8.0, 20.0]);
        for seed in 0..50u64 {
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
            let n = rng.gen_range(2..8);
            let mut t = 0.0;
            let ids: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
            let mut routes = Vec::new();
            for id in &ids {
                routes.push((id.as_str(), &["e0", "e1", "e2"][..], t));
                t += rng.gen_range(0.2..3.0);
            }
            let s = scenario(net.clone(), &routes, "v0");
            let trace = simulate(&s, &SimConfig::default(), AvPolicy::IdmFollow).unwrap();
            assert_eq!(collisions(&trace), 0, "seed {seed}");
            for step in &trace.steps {
                for st in step.states.iter().filter(|s| s.active) {
                    if let Some(l) = st.leader {
                        assert!(l.gap >= 0.0, "seed {seed} t {} {}: gap {}", step.time, st.id, l.gap);
                    }
                }
            }
            for id in &ids {
                assert!(trace.first_event(id, EventKind::Arrive).is_some(), "seed {seed}: {id} did not arrive");
            }
        }
    }

    #[test]
    fn deterministic_trace() {
        let net = compile(&t_plan(), &CompileOptions::default()).unwrap();
        let s = scenario(
            net,
            &[("a", &["w_in", "e_out"], 0.0), ("b", &["s_in", "w_out"], 0.5), ("c", &["e_in", "s_out"], 1.0)],
            "a",
        );
        let a = simulate(&s, &SimConfig::default(), AvPolicy::IdmWithLaneChange).unwrap();
        let b = simulate(&s, &SimConfig::default(), AvPolicy::IdmWithLaneChange).unwrap();
        assert_eq!(a.digest(), b.digest());
    }

    #[test]
    fn t_junction_yields_without_collision() {
        let net = compile(&t_plan(), &CompileOptions::default()).unwrap();
        let s = scenario(
            net,
            &[
                ("a", &["w_in", "e_out"], 0.0),
                ("b", &["s_in", "w_out"], 0.0),
                ("c", &["e_in", "s_out"], 0.0),
                ("d", &["s_in", "e_out"], 0.5),
            ],
            "a",
        );
        let trace = simulate(&s, &SimConfig::default(), AvPolicy::IdmFollow).unwrap();
        assert_eq!(collisions(&trace), 0, "{:?}", trace.events);
        for id in ["a", "b", "c", "d"] {
            assert!(trace.first_event(id, EventKind::Arrive).is_some(), "{id}: {:?}", trace.events);
        }
    }

    #[test]
    fn crowded_fork_traps_following_av() {
        let s = crowded_fork();
        assert!(s.validate().is_empty());
        let trace = simulate(&s, &SimConfig::default(), AvPolicy::IdmFollow).unwrap();
        assert!(trace.first_event(&s.av_id, EventKind::Arrive).is_none(), "{:?}", trace.events);
        assert!(trace.events_of(&s.av_id).any(|e| matches!(e.kind, EventKind::Collision | EventKind::Timeout)));
    }

    #[test]
    fn invalid_inputs() {
        let s = scenario(straight(100.0, &[10.0]), &[("a", &["nope"], 0.0)], "a");
        assert!(matches!(simulate(&s, &SimConfig::default(), AvPolicy::IdmFollow), Err(EvalError::InvalidScenario(_))));
        let s = scenario(straight(100.0, &[10.0]), &[("a", &["e0"], 0.0)], "zz");
        assert!(simulate(&s, &SimConfig::default(), AvPolicy::IdmFollow).is_err());
        let cfg = SimConfig { dt: 0.0, ..SimConfig::default() };
        let s = scenario(straight(100.0, &[10.0]), &[("a", &["e0"], 0.0)], "a");
        assert!(matches!(simulate(&s, &cfg, AvPolicy::IdmFollow), Err(EvalError::Config(_))));
        assert_eq!("idm-with-lane-change".parse::<AvPolicy>().unwrap(), AvPolicy::IdmWithLaneChange);
    }

    /// Writes the crowded-fork fixture files. Run with --ignored to refresh.
    #[test]
    #[ignore]
    fn regenerate_crowded_fork() {
        use crate::net::{serialize_net, serialize_routes};
        let plan = NetworkPlan {
            nodes: vec![node("s", -400.0, 0.0), node("c", 0.0, 0.0), node("l", 300.0, 60.0), node("r", 300.0, -60.0)],
            edges: vec![
                edge("main", "s", "c", 2, 13.89),
                edge("left", "c", "l", 1, 13.89),
                edge("right", "c", "r", 1, 13.89),
            ],
        };
        let mut net = compile(&plan, &CompileOptions::default()).unwrap();
        net.connections.retain(|c| (c.from_lane == 0) == (c.to_edge == "left"));
        let mk = |id: &str, to: &str, t: f64| Route {
            vehicle_id: id.into(),
            edges: vec!["main".into(), to.into()],
            depart_time: t,
        };
        let routes = vec![
            mk("bv_1", "right", 0.0),
            mk("av", "right", 0.0),
            mk("bv_2", "right", 0.5),
            mk("bv_3", "left", 1.0),
        ];
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/sim");
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("crowded_fork.net.xml"), serialize_net(&net)).unwrap();
        std::fs::write(dir.join("crowded_fork.rou.xml"), serialize_routes(&routes, Some("av"))).unwrap();
    }
}
