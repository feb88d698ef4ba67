use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use super::{RoutingError, RoutingGraph};
use crate::net::{CompiledNetwork, Trip, VehicleKind};

const MAX_DRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripGenParams {
    /// vehicles per second
    pub arrival_rate: f64,
    /// seconds
    pub horizon: f64,
    pub seed: u64,
    pub fringe_only: bool,
}

/// Edges where traffic can enter or leave the network: the from-junction has
/// no other incoming edge, or the to-junction has no other outgoing edge
/// (the edge's own reverse does not count).
pub fn fringe_edges(net: &CompiledNetwork) -> Vec<&str> {
    net.edges
        .iter()
        .filter(|e| {
            let source = net.incoming(&e.from).all(|i| i.is_reverse_of(e));
            let sink = net.outgoing(&e.to).all(|o| o.is_reverse_of(e));
            source || sink
        })
        .map(|e| e.id.as_str())
        .collect()
}

/// Poisson arrivals with uniformly drawn, mutually reachable endpoints.
///
/// The generator is xoshiro256++ seeded through `seed_from_u64`. All
/// departure times are drawn first (inverse-CDF exponential gaps), then each
/// trip draws (source, destination) index pairs until one is usable.
pub fn random_trips(net: &CompiledNetwork, params: &TripGenParams) -> Result<Vec<Trip>, RoutingError> {
    if !(params.arrival_rate > 0.0 && params.arrival_rate.is_finite()) {
        return Err(RoutingError::BadParams(format!("arrival rate {} must be > 0", params.arrival_rate)));
    }
    if !(params.horizon > 0.0 && params.horizon.is_finite()) {
        return Err(RoutingError::BadParams(format!("horizon {} must be > 0", params.horizon)));
    }
    let eligible: Vec<&str> = if params.fringe_only {
        fringe_edges(net)
    } else {
        net.edges.iter().map(|e| e.id.as_str()).collect()
    };
    if eligible.len() < 2 {
        return Err(RoutingError::NotEnoughEdges(eligible.len()));
    }
    let graph = RoutingGraph::from_network(net);
    let vertices: Vec<usize> = eligible.iter().filter_map(|id| graph.vertex(id)).collect();
    let reach: Vec<Vec<bool>> = vertices.iter().map(|&v| graph.reachable(v)).collect();

    let mut rng = Xoshiro256PlusPlus::seed_from_u64(params.seed);
    let mut departs = Vec::new();
    let mut t = 0.0;
    loop {
        let u: f64 = rng.gen();
        t += -(1.0 - u).ln() / params.arrival_rate;
        if t > params.horizon {
            break;
        }
        departs.push(t);
    }

    let mut trips = Vec::new();
    for (k, depart_time) in departs.into_iter().enumerate() {
        let mut chosen = None;
        for _ in 0..MAX_DRAWS {
            let s = rng.gen_range(0..vertices.len());
            let d = rng.gen_range(0..vertices.len());
            if s != d && reach[s][vertices[d]] {
                chosen = Some((s, d));
                break;
            }
        }
        match chosen {
            Some((s, d)) => trips.push(Trip {
                vehicle_id: format!("rt{k}"),
                vehicle_kind: VehicleKind::Bv,
                depart_edge: eligible[s].to_string(),
                arrive_edge: eligible[d].to_string(),
                depart_time,
            }),
            None => log::warn!("trip rt{k}: no reachable source/destination pair after {MAX_DRAWS} draws, skipped"),
        }
    }
    Ok(trips)
}

/// Keeps a uniformly random `n`-subset, in original order.
pub fn subsample_trips(trips: &[Trip], n: usize, seed: u64) -> Result<Vec<Trip>, RoutingError> {
    if n > trips.len() {
        return Err(RoutingError::SubsampleTooLarge { n, len: trips.len() });
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut keep = sample(&mut rng, trips.len(), n).into_vec();
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| trips[i].clone()).collect())
}
