use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::net::{CompiledNetwork, Route, Trip, VehicleKind};
use crate::routing::{expand_trips, random_trips, subsample_trips, TripGenParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    /// Expected trips per requested vehicle.
    pub over_provision: f64,
    /// Departure window, seconds.
    pub window: f64,
    pub max_tries: u32,
    pub fringe_only: bool,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self { over_provision: 1.5, window: 30.0, max_tries: 50, fringe_only: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub trips: Vec<Trip>,
    pub routes: Vec<Route>,
    pub av_id: String,
}

/// RandomTrip counterpart with exactly `n` vehicles: Poisson departures over
/// the window, subsampled to `n`; the earliest departure becomes the AV.
/// Seeds `seed, seed+1, ...` are tried until enough trips are drawn.
pub fn random_trip_baseline(
    net: &CompiledNetwork,
    n: usize,
    seed: u64,
    params: &BaselineParams,
) -> Result<Baseline, EvalError> {
    if n == 0 {
        return Err(EvalError::Config("baseline needs at least one vehicle".into()));
    }
    let rate = params.over_provision * n as f64 / params.window;
    for k in 0..params.max_tries {
        let s = seed.wrapping_add(k as u64);
        let gen = TripGenParams { arrival_rate: rate, horizon: params.window, seed: s, fringe_only: params.fringe_only };
        let trips = random_trips(net, &gen)?;
        if trips.len() < n {
            continue;
        }
        let mut trips = subsample_trips(&trips, n, s)?;
        trips[0].vehicle_kind = VehicleKind::Av;
        let (routes, failures) = expand_trips(net, &trips);
        if !failures.is_empty() {
            continue;
        }
        let av_id = trips[0].vehicle_id.clone();
        return Ok(Baseline { trips, routes, av_id });
    }
    Err(EvalError::Baseline { n, tries: params.max_tries })
}
